// Complexity-adaptive grouping: per-pixel time-constant field, image
// complexity score -> active group count, pattern-generator soft masks with
// key-region-aware iterative sharpening, and the grouped feature stack.
#pragma once

#include <vector>

#include "core/config.hpp"
#include "core/nn.hpp"

namespace tauflow {

template <typename T>
struct TauFieldT {
  TensorT<T> tau;     // [B,hidden,h,w], on tape during training
  TensorT<T> raw;     // pre-activation values, detached (key map input)
};

template <typename T>
struct GroupPlanT {
  TensorT<T> score;            // [B], on tape during training
  std::vector<int> per_image;  // G per image
  int batch_groups = 1;        // max over per_image; rank-5 shapes use this
};

template <typename T>
struct RefineResultT {
  TensorT<T> masks;             // [B,Gmax,h,w]; groups >= G exactly zero
  std::vector<double> rewards;  // one per flow step
  TensorT<T> final_temp;        // [B,1,h,w], the temperature the masks used
};

// G = min(G_max, 1 + floor(score * G_max))
int groups_for_score(double score, int gmax);

// Mean central-difference gradient magnitude of the grayscale image at the
// grouping resolution, normalized by the batch max (+1e-6). Plain values.
template <typename T>
TensorT<T> edge_density(const TensorT<T>& image, int feat);

template <typename T>
struct GroupingT {
  ConvLayerT<T> tau_conv;                  // 1x1 ltc -> hidden
  ConvLayerT<T> pat1, pat2;                // 3x3 blocks
  GroupNormLayerT<T> pat1_n, pat2_n;
  ConvLayerT<T> pat_head;                  // 1x1 -> max_groups
  LinearLayerT<T> mlp_in, mlp_out;         // (2*ltc+1) -> 16 -> 1
  ConvLayerT<T> fast_proj, fast_head;      // 1x1 ltc -> 8, 1x1 8 -> 1
  int max_groups = 5;
  int max_flow_steps = 3;
  double reward_scale = 0.1;
  double tau_min = 1e-2;
  double tau_max = 1e3;

  static GroupingT build(ParamStoreT<T>& store, const ModelConfig& cfg, Rng& rng);

  TauFieldT<T> compute_tau(CtxT<T>& ctx, const TensorT<T>& ltc) const;
  GroupPlanT<T> assess_complexity(CtxT<T>& ctx, const TensorT<T>& ltc,
                                  const TensorT<T>& image) const;
  TensorT<T> mask_logits(CtxT<T>& ctx, const TensorT<T>& ltc, const TensorT<T>& tau) const;
  TensorT<T> key_map(const TensorT<T>& ltc) const;
  RefineResultT<T> refine_masks(const TensorT<T>& logits, const TensorT<T>& key,
                                const TensorT<T>& ltc, int G, const TensorT<T>* target_feat) const;

  // Softmax over the first G groups; groups >= G come out exactly zero.
  static TensorT<T> restricted_softmax(const TensorT<T>& logits, int G,
                                       const TensorT<T>* temperature);
  // U[b,g,c,i,j] = ltc[b,c,i,j] * masks[b,g,i,j]
  static TensorT<T> group_features(const TensorT<T>& ltc, const TensorT<T>& masks);
};

}  // namespace tauflow
