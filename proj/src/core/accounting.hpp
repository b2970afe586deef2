// Analytic parameter and FLOP accounting. The model is described as a flat
// list of layer records mirroring the runtime construction; parameter counts
// fold over that list and must agree exactly with an enumeration of the
// allocated tensors. FLOPs use the 2-FLOPs-per-MAC convention, with
// normalizations and activations charged 1 FLOP per element. Group- and
// step-dependent stages scale with the active group count G and T.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "core/config.hpp"

namespace tauflow {

enum class LayerKind {
  Conv,        // cin/cout/k/groups at h x w
  Linear,      // cin -> cout, per batch element
  GroupNorm,   // affine pair, 1 FLOP/element
  Activation,  // parameter-free, 1 FLOP/element over cout*h*w
  Scalar,      // single learnable scalar
};

struct LayerSpec {
  std::string module;  // name prefix: backbone, interface, grouping, attention, cell
  std::string label;
  LayerKind kind = LayerKind::Conv;
  int cin = 0, cout = 0, k = 1, groups = 1;
  int h = 1, w = 1;        // output grid the layer runs on
  bool bias = true;
  bool per_group = false;     // cost scales with active groups
  bool per_step = false;      // cost additionally scales with time steps
  bool shared_params = false; // reuses another layer's weights: FLOPs only
};

int64_t layer_params(const LayerSpec& layer);
int64_t layer_flops(const LayerSpec& layer);

// the full architecture at cfg.input_size
std::vector<LayerSpec> describe_model(const ModelConfig& cfg);

struct CostReport {
  int64_t params_total = 0;
  std::map<std::string, int64_t> params_by_module;
  int64_t flops_static = 0;          // independent of G
  int64_t flops_per_group = 0;       // once per active group
  int64_t flops_per_group_step = 0;  // per active group, per time step
  int time_steps = 2;

  int64_t flops_total(int groups) const {
    return flops_static +
           static_cast<int64_t>(groups) * (flops_per_group + time_steps * flops_per_group_step);
  }
};

CostReport cost_report(const ModelConfig& cfg);

// Human-readable breakdown with per-module parameters and the G sweep.
// groups > 0 restricts the sweep to that single group count.
std::string cost_table(const ModelConfig& cfg, int groups = 0);

}  // namespace tauflow
