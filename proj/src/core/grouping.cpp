#include "core/grouping.hpp"

#include <cmath>

namespace tauflow {

int groups_for_score(double score, int gmax) {
  if (!(score >= 0.0 && score <= 1.0)) fail(ErrorCode::InvalidArgument, "groups_for_score: score outside [0,1]");
  const int g = 1 + static_cast<int>(std::floor(score * gmax));
  return g > gmax ? gmax : g;
}

template <typename T>
TensorT<T> edge_density(const TensorT<T>& image, int feat) {
  if (image.rank() != 4 || image.dim(1) != 3) fail(ErrorCode::Shape, "edge_density: expected [B,3,H,W]");
  const int B = image.dim(0);
  TensorT<T> gray = reduce_mean(image.detached(), {1}, true);  // [B,1,H,W]
  TensorT<T> down = bilinear_resize(gray, feat, feat);
  TensorT<T> out = TensorT<T>::zeros({B});
  const T* p = down.ptr();
  for (int b = 0; b < B; ++b) {
    const T* img = p + static_cast<int64_t>(b) * feat * feat;
    double acc = 0.0;
    for (int i = 1; i + 1 < feat; ++i) {
      for (int j = 1; j + 1 < feat; ++j) {
        const double gx = 0.5 * (img[i * feat + j + 1] - img[i * feat + j - 1]);
        const double gy = 0.5 * (img[(i + 1) * feat + j] - img[(i - 1) * feat + j]);
        acc += std::sqrt(gx * gx + gy * gy);
      }
    }
    (*out.data)[static_cast<size_t>(b)] = static_cast<T>(acc / (static_cast<double>(feat) * feat));
  }
  T mx = T(0);
  for (int b = 0; b < B; ++b) mx = std::max(mx, (*out.data)[static_cast<size_t>(b)]);
  const T denom = mx + static_cast<T>(1e-6);
  for (int b = 0; b < B; ++b) (*out.data)[static_cast<size_t>(b)] /= denom;
  return out;
}

template <typename T>
GroupingT<T> GroupingT<T>::build(ParamStoreT<T>& store, const ModelConfig& cfg, Rng& rng) {
  GroupingT<T> g;
  g.max_groups = cfg.max_groups;
  g.max_flow_steps = cfg.max_flow_steps;
  g.reward_scale = cfg.reward_scale;
  g.tau_min = cfg.tau_min;
  g.tau_max = cfg.tau_max;
  const int ltc = cfg.ltc_channels();
  const int cb = cfg.base_channel;
  g.tau_conv = ConvLayerT<T>::make(store, "grouping.tau_conv", ltc, cfg.hidden_channels, 1, 1, 0, rng);
  g.pat1 = ConvLayerT<T>::make(store, "grouping.pattern1", ltc + cfg.hidden_channels, cb, 3, 1, 1, rng);
  g.pat1_n = GroupNormLayerT<T>::make(store, "grouping.pattern1_norm", cb, 8);
  g.pat2 = ConvLayerT<T>::make(store, "grouping.pattern2", cb, cb, 3, 1, 1, rng);
  g.pat2_n = GroupNormLayerT<T>::make(store, "grouping.pattern2_norm", cb, 8);
  g.pat_head = ConvLayerT<T>::make(store, "grouping.pattern_head", cb, cfg.max_groups, 1, 1, 0, rng);
  g.mlp_in = LinearLayerT<T>::make(store, "grouping.mlp_in", 2 * ltc + 1, 16, rng);
  g.mlp_out = LinearLayerT<T>::make(store, "grouping.mlp_out", 16, 1, rng);
  g.fast_proj = ConvLayerT<T>::make(store, "grouping.fast_proj", ltc, 8, 1, 1, 0, rng);
  g.fast_head = ConvLayerT<T>::make(store, "grouping.fast_head", 8, 1, 1, 1, 0, rng);
  return g;
}

template <typename T>
TauFieldT<T> GroupingT<T>::compute_tau(CtxT<T>& ctx, const TensorT<T>& ltc) const {
  TauFieldT<T> out;
  TensorT<T> raw = tau_conv(ctx, ltc);
  out.raw = raw.detached();
  out.tau = clamp(affine(softplus(raw), T(1), static_cast<T>(1e-6)), static_cast<T>(tau_min),
                  static_cast<T>(tau_max));
  return out;
}

template <typename T>
GroupPlanT<T> GroupingT<T>::assess_complexity(CtxT<T>& ctx, const TensorT<T>& ltc,
                                              const TensorT<T>& image) const {
  const int B = ltc.dim(0);
  const int C = ltc.dim(1);
  TensorT<T> mean_k = reduce_mean(ltc, {2, 3}, true);           // [B,C,1,1]
  TensorT<T> centered = sub(ltc, expand(mean_k, ltc.shape));
  TensorT<T> var = reduce_mean(mul(centered, centered), {2, 3}, false);  // [B,C]
  // tiny floor keeps the gradient finite on constant channels
  TensorT<T> stds = sqrt_op(affine(var, T(1), static_cast<T>(1e-8)));
  TensorT<T> means = reshape(mean_k, {B, C});
  TensorT<T> edge = reshape(edge_density(image, ltc.dim(2)), {B, 1});
  TensorT<T> feats = concat<T>({means, stds, edge}, 1);         // [B,2C+1]
  TensorT<T> hidden = relu(mlp_in(ctx, feats));
  TensorT<T> score = sigmoid(mlp_out(ctx, hidden));             // [B,1]

  GroupPlanT<T> plan;
  plan.score = reshape(score, {B});
  plan.per_image.resize(static_cast<size_t>(B));
  plan.batch_groups = 1;
  for (int b = 0; b < B; ++b) {
    const int g = groups_for_score(static_cast<double>((*score.data)[static_cast<size_t>(b)]), max_groups);
    plan.per_image[static_cast<size_t>(b)] = g;
    plan.batch_groups = std::max(plan.batch_groups, g);
  }
  return plan;
}

template <typename T>
TensorT<T> GroupingT<T>::mask_logits(CtxT<T>& ctx, const TensorT<T>& ltc, const TensorT<T>& tau) const {
  TensorT<T> x = concat<T>({ltc, tau}, 1);
  x = relu(pat1_n(ctx, pat1(ctx, x)));
  x = relu(pat2_n(ctx, pat2(ctx, x)));
  return pat_head(ctx, x);
}

template <typename T>
TensorT<T> GroupingT<T>::restricted_softmax(const TensorT<T>& logits, int G,
                                            const TensorT<T>* temperature) {
  const int gmax = logits.dim(1);
  if (G < 1 || G > gmax) fail(ErrorCode::InvalidArgument, "restricted_softmax: bad group count");
  TensorT<T> active = G == gmax ? logits : slice(logits, 1, 0, G);
  TensorT<T> sm = temperature ? softmax_axis(active, 1, *temperature) : softmax_axis(active, 1);
  if (G == gmax) return sm;
  Shape zs = logits.shape;
  zs[1] = gmax - G;
  return concat<T>({sm, TensorT<T>::zeros(zs)}, 1);
}

template <typename T>
TensorT<T> GroupingT<T>::key_map(const TensorT<T>& ltc) const {
  const int B = ltc.dim(0), h = ltc.dim(2), w = ltc.dim(3);
  const int cin = ltc.dim(1);
  const int cout = tau_conv.w->value.dim(0);
  TensorT<T> raw = conv2d(ltc.detached(), tau_conv.w->value, tau_conv.b->value, 1, 0, 1);
  const T* rp = raw.ptr();
  const T* wp = tau_conv.w->value.ptr();  // [cout,cin,1,1]

  TensorT<T> key = TensorT<T>::zeros({B, 1, h, w});
  T* kp = key.ptr();
  std::vector<double> v(static_cast<size_t>(cin));
  const double lo = tau_min, hi = tau_max;
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        std::fill(v.begin(), v.end(), 0.0);
        for (int c = 0; c < cout; ++c) {
          const double r = static_cast<double>(rp[((static_cast<int64_t>(b) * cout + c) * h + i) * w + j]);
          const double sp = r > 30.0 ? r : std::log1p(std::exp(r));
          const double tau_val = sp + 1e-6;
          if (!(tau_val > lo && tau_val < hi)) continue;  // clamped: zero subgradient
          const double sig = 1.0 / (1.0 + std::exp(-r));
          const T* wrow = wp + static_cast<int64_t>(c) * cin;
          for (int ci = 0; ci < cin; ++ci) v[static_cast<size_t>(ci)] += sig * wrow[ci];
        }
        double nrm = 0.0;
        for (int ci = 0; ci < cin; ++ci) {
          const double vc = v[static_cast<size_t>(ci)] / cout;
          nrm += vc * vc;
        }
        kp[(static_cast<int64_t>(b) * h + i) * w + j] = static_cast<T>(std::sqrt(nrm));
      }
    }
  }
  // min-max normalize per image
  for (int b = 0; b < B; ++b) {
    T* plane = kp + static_cast<int64_t>(b) * h * w;
    T mn = plane[0], mx = plane[0];
    for (int64_t i = 1; i < static_cast<int64_t>(h) * w; ++i) {
      mn = std::min(mn, plane[i]);
      mx = std::max(mx, plane[i]);
    }
    const T denom = mx - mn + static_cast<T>(1e-6);
    for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) plane[i] = (plane[i] - mn) / denom;
  }
  return key;
}

namespace {

// Dice coefficient of probabilities vs binary target, batch and pixels pooled.
template <typename T>
double soft_dice_coeff(const TensorT<T>& p, const TensorT<T>& t) {
  double inter = 0.0, psum = 0.0, tsum = 0.0;
  const T* pp = p.ptr();
  const T* tp = t.ptr();
  for (int64_t i = 0; i < p.numel(); ++i) {
    inter += static_cast<double>(pp[i]) * tp[i];
    psum += pp[i];
    tsum += tp[i];
  }
  return (2.0 * inter + 1e-6) / (psum + tsum + 1e-6);
}

}  // namespace

template <typename T>
RefineResultT<T> GroupingT<T>::refine_masks(const TensorT<T>& logits, const TensorT<T>& key,
                                            const TensorT<T>& ltc, int G,
                                            const TensorT<T>* target_feat) const {
  const int B = logits.dim(0), h = logits.dim(2), w = logits.dim(3);
  if (key.rank() != 4 || key.dim(0) != B || key.dim(1) != 1 || key.dim(2) != h || key.dim(3) != w) {
    fail(ErrorCode::Shape, "refine_masks: key map shape " + shape_str(key.shape));
  }
  if (target_feat && (target_feat->rank() != 4 || target_feat->dim(0) != B ||
                      target_feat->dim(1) != 1 || target_feat->dim(2) != h || target_feat->dim(3) != w)) {
    fail(ErrorCode::Shape, "refine_masks: target shape " + shape_str(target_feat->shape));
  }

  // The whole refinement is a forward controller: it runs off-tape and only
  // the final temperature field re-enters the differentiable path as data.
  CtxT<T> off;
  TensorT<T> logits_d = logits.detached();
  TensorT<T> fast_feat = fast_proj(off, ltc.detached());  // [B,8,h,w]

  auto temp_field = [&](double tk) {
    TensorT<T> t = TensorT<T>::zeros({B, 1, h, w});
    const T* kp = key.ptr();
    T* tp = t.ptr();
    for (int64_t i = 0; i < t.numel(); ++i) tp[i] = static_cast<T>(tk) / (T(1) + kp[i]);
    return t;
  };

  RefineResultT<T> out;
  double tk = 1.0;
  for (int step = 0; step < max_flow_steps; ++step) {
    TensorT<T> temp = temp_field(tk);
    TensorT<T> masks_k = restricted_softmax(logits_d, G, &temp);
    // sum_g masks[g] * fast_feat, evaluated per group
    TensorT<T> pooled;
    for (int g = 0; g < max_groups; ++g) {
      TensorT<T> mg = slice(masks_k, 1, g, 1);  // [B,1,h,w]
      TensorT<T> term = mul(mg, fast_feat);
      pooled = g == 0 ? term : add(pooled, term);
    }
    TensorT<T> fast_logits = fast_head(off, pooled);
    TensorT<T> p = sigmoid(fast_logits);
    double r;
    if (target_feat) {
      r = soft_dice_coeff(p, *target_feat) - 0.5;
    } else {
      double acc = 0.0;
      const T* pp = p.ptr();
      for (int64_t i = 0; i < p.numel(); ++i) acc += std::abs(static_cast<double>(pp[i]) - 0.5);
      r = 2.0 * acc / static_cast<double>(p.numel()) - 0.5;
    }
    out.rewards.push_back(r);
    tk *= std::exp(-reward_scale * r);
  }

  out.final_temp = temp_field(tk);
  out.masks = restricted_softmax(logits, G, &out.final_temp);
  return out;
}

template <typename T>
TensorT<T> GroupingT<T>::group_features(const TensorT<T>& ltc, const TensorT<T>& masks) {
  const int B = ltc.dim(0), C = ltc.dim(1), h = ltc.dim(2), w = ltc.dim(3);
  const int gmax = masks.dim(1);
  if (masks.dim(0) != B || masks.dim(2) != h || masks.dim(3) != w) {
    fail(ErrorCode::Shape, "group_features: masks " + shape_str(masks.shape) + " vs ltc " + shape_str(ltc.shape));
  }
  TensorT<T> lt5 = reshape(ltc, {B, 1, C, h, w});
  TensorT<T> mk5 = reshape(masks, {B, gmax, 1, h, w});
  return mul(expand(lt5, {B, gmax, C, h, w}), expand(mk5, {B, gmax, C, h, w}));
}

#define TAUFLOW_INSTANTIATE_GROUPING(T)              \
  template struct GroupingT<T>;                      \
  template TensorT<T> edge_density<T>(const TensorT<T>&, int);

TAUFLOW_INSTANTIATE_GROUPING(float)
TAUFLOW_INSTANTIATE_GROUPING(double)

#undef TAUFLOW_INSTANTIATE_GROUPING

}  // namespace tauflow
