#include "core/model.hpp"

#include <cmath>

namespace tauflow {

template <typename T>
TauFlowModelT<T> TauFlowModelT<T>::build(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  TauFlowModelT<T> model;
  model.cfg = cfg;
  Rng rng(seed, 0x70a0);
  model.backbone = BackboneT<T>::build(model.params, cfg, rng);
  model.bridge = FlowInterfaceT<T>::build(model.params, cfg, rng);
  model.grouping = GroupingT<T>::build(model.params, cfg, rng);
  model.attention = TauAttentionT<T>::build(model.params, cfg, rng);
  model.cell = ConvLtcCellT<T>::build(model.params, cfg, rng);
  return model;
}

template <typename T>
TensorT<T> TauFlowModelT<T>::target_at_feat(const TensorT<T>& target) const {
  int feat = cfg.feat_size();
  TensorT<T> small = bilinear_resize(target, feat, feat);
  for (auto& v : *small.data) v = v >= T(0.5) ? T(1) : T(0);
  return small;
}

template <typename T>
ForwardResultT<T> TauFlowModelT<T>::forward(CtxT<T>& ctx, const TensorT<T>& image,
                                            const TensorT<T>* target) const {
  if (image.shape.size() != 4 || image.shape[1] != 3 || image.shape[2] != cfg.input_size ||
      image.shape[3] != cfg.input_size)
    fail(ErrorCode::Shape, "forward: expected image [B,3," + std::to_string(cfg.input_size) +
                               "," + std::to_string(cfg.input_size) + "], got " +
                               shape_str(image.shape));

  ForwardResultT<T> fr;
  auto pyr = backbone.encode(ctx, image);
  auto io = bridge.forward(ctx, pyr.f3);
  fr.ltc = io.ltc_input;

  auto tau_field = grouping.compute_tau(ctx, fr.ltc);
  fr.tau = tau_field.tau;
  fr.plan = grouping.assess_complexity(ctx, fr.ltc, image);
  fr.score = fr.plan.score;

  TensorT<T> logits = grouping.mask_logits(ctx, fr.ltc, fr.tau);
  TensorT<T> key = grouping.key_map(fr.ltc);
  TensorT<T> target_feat;
  if (target) target_feat = target_at_feat(*target);
  auto refined = grouping.refine_masks(logits, key, fr.ltc, fr.plan.batch_groups,
                                       target ? &target_feat : nullptr);
  fr.masks = refined.masks;
  fr.rewards = refined.rewards;

  TensorT<T> u = GroupingT<T>::group_features(fr.ltc, fr.masks);
  auto gated = attention.forward(ctx, u, fr.masks, fr.tau, fr.plan.batch_groups);
  fr.attn = gated.attn;

  auto evolved = cell.evolve_and_fuse(ctx, gated.u_weighted, fr.masks, io.s0,
                                      fr.plan.batch_groups);
  fr.trace = std::move(evolved.trace);

  auto heads = backbone.decode(ctx, evolved.fused, pyr.f2, pyr.f1);
  fr.seg_logits = heads.seg_logits;
  fr.aux_logits = heads.aux_logits;
  return fr;
}

template <typename T>
LossBreakdownT<T> TauFlowModelT<T>::compute_loss(CtxT<T>& ctx, const ForwardResultT<T>& fr,
                                                 const TensorT<T>& target) const {
  if (target.shape != Shape({fr.seg_logits.shape[0], 1, fr.seg_logits.shape[2],
                             fr.seg_logits.shape[3]}))
    fail(ErrorCode::Shape, "compute_loss: target must match seg logits, got " +
                               shape_str(target.shape));

  LossPartsT<T> parts;
  parts.max_groups = cfg.max_groups;
  parts.main = dice_focal_loss(fr.seg_logits, target, cfg.loss.focal_alpha, cfg.loss.focal_gamma);

  int half = cfg.input_size / 2;
  TensorT<T> aux_target = bilinear_resize(target, half, half);
  for (auto& v : *aux_target.data) v = v >= T(0.5) ? T(1) : T(0);
  parts.aux = dice_focal_loss(fr.aux_logits, aux_target, cfg.loss.focal_alpha,
                              cfg.loss.focal_gamma);

  parts.score = fr.score;
  parts.target_score = complexity_target(target);
  parts.masks = fr.masks;

  if (cfg.stdp.enabled && ctx.tape) {
    StdpRegularizerT<T> reg(cfg.stdp);
    auto events = reg.event_approx(fr.trace);
    parts.stdp = cfg.stdp.rho > 0.0
                     ? reg.supervised_loss(events, fr.trace.taus, target_at_feat(target))
                     : reg.loss(events, fr.trace.taus);
  }
  return total_loss(parts, cfg.loss);
}

std::pair<Tensor, Tensor> make_batch(const std::vector<Sample>& samples,
                                     const std::vector<int>& indices) {
  if (indices.empty()) fail(ErrorCode::InvalidArgument, "make_batch: empty index list");
  const auto& first = samples.at(indices[0]);
  int h = static_cast<int>(first.image.shape[1]);
  int w = static_cast<int>(first.image.shape[2]);
  int b = static_cast<int>(indices.size());
  Tensor images = Tensor::zeros({b, 3, h, w});
  Tensor masks = Tensor::zeros({b, 1, h, w});
  for (int i = 0; i < b; ++i) {
    const auto& s = samples.at(indices[i]);
    if (s.image.shape != first.image.shape || s.mask.shape != Shape({1, h, w}))
      fail(ErrorCode::Shape, "make_batch: sample " + s.id + " has mismatched shape");
    std::copy(s.image.data->begin(), s.image.data->end(),
              images.data->begin() + static_cast<int64_t>(i) * 3 * h * w);
    std::copy(s.mask.data->begin(), s.mask.data->end(),
              masks.data->begin() + static_cast<int64_t>(i) * h * w);
  }
  return {images, masks};
}

template struct TauFlowModelT<float>;
template struct TauFlowModelT<double>;

}  // namespace tauflow
