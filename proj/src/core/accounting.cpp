#include "core/accounting.hpp"

#include <sstream>

#include "core/common.hpp"

namespace tauflow {

int64_t layer_params(const LayerSpec& l) {
  if (l.shared_params) return 0;
  switch (l.kind) {
    case LayerKind::Conv:
      return static_cast<int64_t>(l.cout) * (l.cin / l.groups) * l.k * l.k +
             (l.bias ? l.cout : 0);
    case LayerKind::Linear:
      return static_cast<int64_t>(l.cout) * l.cin + (l.bias ? l.cout : 0);
    case LayerKind::GroupNorm:
      return 2LL * l.cout;
    case LayerKind::Activation:
      return 0;
    case LayerKind::Scalar:
      return 1;
  }
  fail(ErrorCode::InvalidArgument, "unsupported layer kind in cost model: " + l.label);
}

int64_t layer_flops(const LayerSpec& l) {
  int64_t hw = static_cast<int64_t>(l.h) * l.w;
  switch (l.kind) {
    case LayerKind::Conv:
      return 2LL * l.cout * (l.cin / l.groups) * l.k * l.k * hw;
    case LayerKind::Linear:
      return 2LL * l.cout * l.cin;
    case LayerKind::GroupNorm:
    case LayerKind::Activation:
      return static_cast<int64_t>(l.cout) * hw;
    case LayerKind::Scalar:
      return 1;
  }
  fail(ErrorCode::InvalidArgument, "unsupported layer kind in cost model: " + l.label);
}

std::vector<LayerSpec> describe_model(const ModelConfig& cfg) {
  cfg.validate();
  const int s = cfg.input_size, s2 = s / 2, s4 = s / 4;
  const int cb = cfg.base_channel, hid = cfg.hidden_channels;
  const int ltc = cfg.ltc_channels(), gmax = cfg.max_groups, qk = cfg.qk_dim;
  std::vector<LayerSpec> v;
  auto add = [&](LayerSpec l) { v.push_back(std::move(l)); };
  auto conv_gn_relu = [&](const std::string& label, int cin, int cout, int k, int h) {
    add({"backbone", label, LayerKind::Conv, cin, cout, k, 1, h, h});
    add({"backbone", label + "_norm", LayerKind::GroupNorm, cout, cout, 1, 1, h, h});
    add({"backbone", label + "_relu", LayerKind::Activation, cout, cout, 1, 1, h, h});
  };

  // encoder: two 3x3 blocks per stage, stages 2 and 3 open with stride 2
  conv_gn_relu("enc1a", 3, cb, 3, s);
  conv_gn_relu("enc1b", cb, cb, 3, s);
  conv_gn_relu("enc2a", cb, cb, 3, s2);
  conv_gn_relu("enc2b", cb, cb, 3, s2);
  conv_gn_relu("enc3a", cb, cb, 3, s4);
  conv_gn_relu("enc3b", cb, cb, 3, s4);
  // decoder: upsample (1 FLOP/element on the enlarged grid), concat skip, block
  add({"backbone", "up2", LayerKind::Activation, cb, cb, 1, 1, s2, s2});
  conv_gn_relu("dec2", 2 * cb, cb, 3, s2);
  add({"backbone", "up1", LayerKind::Activation, cb, cb, 1, 1, s, s});
  conv_gn_relu("dec1", 2 * cb, cb, 3, s);
  add({"backbone", "aux_head", LayerKind::Conv, cb, 1, 1, 1, s2, s2});
  add({"backbone", "seg_head", LayerKind::Conv, cb, 1, 1, 1, s, s});

  // bridge into the temporal core
  add({"interface", "pos_conv", LayerKind::Conv, 1, cfg.group_embed_dim, cfg.pos_kernel, 1, s4,
       s4});
  add({"interface", "s0_map", LayerKind::Linear, cb, hid, 1, 1, 1, 1});
  add({"interface", "s0_tanh", LayerKind::Activation, hid, hid, 1, 1, s4, s4});

  // grouping: time-constant field, complexity scorer, pattern generator,
  // sensitivity key, refinement controller
  add({"grouping", "tau_conv", LayerKind::Conv, ltc, hid, 1, 1, s4, s4});
  add({"grouping", "tau_softplus", LayerKind::Activation, hid, hid, 1, 1, s4, s4});
  add({"grouping", "mlp_in", LayerKind::Linear, 2 * ltc + 1, 16, 1, 1, 1, 1});
  add({"grouping", "mlp_out", LayerKind::Linear, 16, 1, 1, 1, 1, 1});
  add({"grouping", "pattern1", LayerKind::Conv, ltc + hid, cb, 3, 1, s4, s4});
  add({"grouping", "pattern1_norm", LayerKind::GroupNorm, cb, cb, 1, 1, s4, s4});
  add({"grouping", "pattern1_relu", LayerKind::Activation, cb, cb, 1, 1, s4, s4});
  add({"grouping", "pattern2", LayerKind::Conv, cb, cb, 3, 1, s4, s4});
  add({"grouping", "pattern2_norm", LayerKind::GroupNorm, cb, cb, 1, 1, s4, s4});
  add({"grouping", "pattern2_relu", LayerKind::Activation, cb, cb, 1, 1, s4, s4});
  add({"grouping", "pattern_head", LayerKind::Conv, cb, gmax, 1, 1, s4, s4});
  add({"grouping", "mask_softmax", LayerKind::Activation, gmax, gmax, 1, 1, s4, s4});
  // key map re-reads the tau projection in value space: no parameters of its
  // own, flops of a bias-free 1x1 conv
  LayerSpec key{"grouping", "key_map", LayerKind::Conv, ltc, hid, 1, 1, s4, s4};
  key.bias = false;
  key.shared_params = true;
  add(key);
  add({"grouping", "fast_proj", LayerKind::Conv, ltc, 8, 1, 1, s4, s4});
  add({"grouping", "fast_head", LayerKind::Conv, 8, 1, 1, 1, s4, s4});

  // attention: pooled Q/K per active group plus three mixing scalars
  LayerSpec q{"attention", "q_proj", LayerKind::Conv, ltc, qk, 1, 1, s4, s4};
  q.bias = false;
  q.per_group = true;
  add(q);
  LayerSpec k = q;
  k.label = "k_proj";
  add(k);
  LayerSpec pool{"attention", "qk_pool", LayerKind::Activation, qk, qk, 1, 1, s4, s4};
  pool.per_group = true;
  add(pool);
  LayerSpec sc{"attention", "score_map", LayerKind::Linear, qk, 1, 1, 1, 1, 1};
  sc.per_group = true;
  add(sc);
  add({"attention", "mix_qk", LayerKind::Scalar, 1, 1, 1, 1, 1, 1});
  add({"attention", "mix_mass", LayerKind::Scalar, 1, 1, 1, 1, 1, 1});
  add({"attention", "mix_tau", LayerKind::Scalar, 1, 1, 1, 1, 1, 1});

  // cell: per-group time constants and drive once, state path per step
  auto per_group = [&](LayerSpec l) {
    l.per_group = true;
    return l;
  };
  auto per_step = [&](LayerSpec l) {
    l.per_group = true;
    l.per_step = true;
    return l;
  };
  add(per_group({"cell", "tau", LayerKind::Conv, ltc, hid, 1, 1, s4, s4}));
  add(per_group({"cell", "tau_softplus", LayerKind::Activation, hid, hid, 1, 1, s4, s4}));
  add(per_group({"cell", "input", LayerKind::Conv, ltc, hid, 1, 1, s4, s4}));
  add(per_step({"cell", "state_dw", LayerKind::Conv, hid, hid, 3, hid, s4, s4}));
  add(per_step({"cell", "state_pw", LayerKind::Conv, hid, hid, 1, 1, s4, s4}));
  add(per_step({"cell", "state_tanh", LayerKind::Activation, hid, hid, 1, 1, s4, s4}));
  add(per_step({"cell", "state_blend", LayerKind::Activation, hid, hid, 1, 1, s4, s4}));
  add(per_group({"cell", "norm", LayerKind::GroupNorm, hid, hid, 1, 1, s4, s4}));
  add(per_group({"cell", "proj", LayerKind::Conv, hid, hid, 1, 1, s4, s4}));
  add(per_group({"cell", "out", LayerKind::Conv, hid, cb, 1, 1, s4, s4}));
  add(per_group({"cell", "fuse", LayerKind::Activation, cb, cb, 1, 1, s4, s4}));
  return v;
}

CostReport cost_report(const ModelConfig& cfg) {
  CostReport report;
  report.time_steps = cfg.time_steps;
  for (const auto& layer : describe_model(cfg)) {
    int64_t p = layer_params(layer);
    report.params_total += p;
    report.params_by_module[layer.module] += p;
    int64_t f = layer_flops(layer);
    if (layer.per_step)
      report.flops_per_group_step += f;
    else if (layer.per_group)
      report.flops_per_group += f;
    else
      report.flops_static += f;
  }
  return report;
}

std::string cost_table(const ModelConfig& cfg, int groups) {
  if (groups < 0 || groups > cfg.max_groups)
    fail(ErrorCode::InvalidArgument,
         "cost_table: groups must be in 1.." + std::to_string(cfg.max_groups));
  CostReport r = cost_report(cfg);
  std::ostringstream out;
  out << "parameters by module\n";
  for (const auto& [module, count] : r.params_by_module)
    out << "  " << module << "\t" << count << "\n";
  out << "params_total\t" << r.params_total << "\n";
  out << "flops at " << cfg.input_size << "x" << cfg.input_size << " (T=" << cfg.time_steps
      << ")\n";
  for (int g = groups > 0 ? groups : 1; g <= (groups > 0 ? groups : cfg.max_groups); ++g)
    out << "  G=" << g << "\t" << r.flops_total(g) << "\n";
  return out.str();
}

}  // namespace tauflow
