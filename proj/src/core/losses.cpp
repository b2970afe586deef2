#include "core/losses.hpp"

#include <cmath>

namespace tauflow {

namespace {
constexpr double kDiceEps = 1e-6;
constexpr double kProbClip = 1e-7;
}  // namespace

template <typename T>
TensorT<T> dice_loss(const TensorT<T>& p, const TensorT<T>& t) {
  if (p.shape != t.shape) {
    fail(ErrorCode::Shape, "dice_loss: " + shape_str(p.shape) + " vs " + shape_str(t.shape));
  }
  std::vector<int> all_axes(static_cast<size_t>(p.rank()));
  for (int i = 0; i < p.rank(); ++i) all_axes[static_cast<size_t>(i)] = i;
  TensorT<T> inter = reduce_sum(mul(p, t), all_axes, false);
  TensorT<T> mass = add(reduce_sum(p, all_axes, false), reduce_sum(t, all_axes, false));
  TensorT<T> coeff = div(affine(inter, T(2), static_cast<T>(kDiceEps)),
                         affine(mass, T(1), static_cast<T>(kDiceEps)));
  return affine(coeff, T(-1), T(1));
}

template <typename T>
TensorT<T> focal_loss(const TensorT<T>& p_raw, const TensorT<T>& t, double alpha, double gamma) {
  if (p_raw.shape != t.shape) {
    fail(ErrorCode::Shape, "focal_loss: " + shape_str(p_raw.shape) + " vs " + shape_str(t.shape));
  }
  TensorT<T> p = clamp(p_raw, static_cast<T>(kProbClip), static_cast<T>(1.0 - kProbClip));
  TensorT<T> q = affine(p, T(-1), T(1));  // 1 - p
  auto pow_g = [&](const TensorT<T>& x) {
    return exp_op(affine(log_op(x), static_cast<T>(gamma), T(0)));
  };
  TensorT<T> pos = mul(mul(t, pow_g(q)), log_op(p));
  TensorT<T> neg = mul(mul(affine(t, T(-1), T(1)), pow_g(p)), log_op(q));
  TensorT<T> combined = add(affine(pos, static_cast<T>(alpha), T(0)),
                            affine(neg, static_cast<T>(1.0 - alpha), T(0)));
  std::vector<int> all_axes(static_cast<size_t>(p.rank()));
  for (int i = 0; i < p.rank(); ++i) all_axes[static_cast<size_t>(i)] = i;
  return affine(reduce_mean(combined, all_axes, false), T(-1), T(0));
}

template <typename T>
TensorT<T> dice_focal_loss(const TensorT<T>& logits, const TensorT<T>& target, double alpha,
                           double gamma) {
  TensorT<T> p = sigmoid(logits);
  TensorT<T> both = add(dice_loss(p, target), focal_loss(p, target, alpha, gamma));
  return affine(both, T(0.5), T(0));
}

template <typename T>
TensorT<T> flow_smooth_loss(const TensorT<T>& masks) {
  if (masks.rank() != 4) fail(ErrorCode::Shape, "flow_smooth_loss: masks must be rank 4");
  const int h = masks.dim(2), w = masks.dim(3);
  const int64_t n = masks.numel();
  TensorT<T> acc;
  if (w > 1) {
    TensorT<T> dx = sub(slice(masks, 3, 1, w - 1), slice(masks, 3, 0, w - 1));
    acc = reduce_sum(abs_op(dx), {0, 1, 2, 3}, false);
  }
  if (h > 1) {
    TensorT<T> dy = sub(slice(masks, 2, 1, h - 1), slice(masks, 2, 0, h - 1));
    TensorT<T> sy = reduce_sum(abs_op(dy), {0, 1, 2, 3}, false);
    acc = acc.defined() ? add(acc, sy) : sy;
  }
  if (!acc.defined()) return TensorT<T>::zeros({});
  return affine(acc, static_cast<T>(1.0 / static_cast<double>(n)), T(0));
}

template <typename T>
double diversity_reward(const TensorT<T>& masks, int max_groups) {
  if (masks.rank() != 4) fail(ErrorCode::Shape, "diversity_reward: masks must be rank 4");
  const int B = masks.dim(0), G = masks.dim(1);
  const int64_t plane = static_cast<int64_t>(masks.dim(2)) * masks.dim(3);
  const T* mp = masks.ptr();
  double reward = 0.0;
  for (int b = 0; b < B; ++b) {
    double total = 0.0;
    std::vector<double> mass(static_cast<size_t>(G), 0.0);
    for (int g = 0; g < G; ++g) {
      const T* pl = mp + (static_cast<int64_t>(b) * G + g) * plane;
      double m = 0.0;
      for (int64_t i = 0; i < plane; ++i) m += pl[i];
      mass[static_cast<size_t>(g)] = m;
      total += m;
    }
    int active = 0;
    for (double m : mass) {
      if (m >= 0.05 * total) ++active;
    }
    reward += static_cast<double>(active) / max_groups;
  }
  return reward / B;
}

template <typename T>
TensorT<T> complexity_target(const TensorT<T>& target) {
  if (target.rank() != 4 || target.dim(1) != 1) {
    fail(ErrorCode::Shape, "complexity_target: expected [B,1,H,W]");
  }
  const int B = target.dim(0), h = target.dim(2), w = target.dim(3);
  const T* tp = target.ptr();
  TensorT<T> out = TensorT<T>::zeros({B});
  for (int b = 0; b < B; ++b) {
    const T* plane = tp + static_cast<int64_t>(b) * h * w;
    auto fg = [&](int i, int j) {
      if (i < 0 || i >= h || j < 0 || j >= w) return false;  // outside counts background
      return plane[static_cast<int64_t>(i) * w + j] >= static_cast<T>(0.5);
    };
    int64_t boundary = 0;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        if (!fg(i, j)) continue;
        if (!fg(i - 1, j) || !fg(i + 1, j) || !fg(i, j - 1) || !fg(i, j + 1)) ++boundary;
      }
    }
    const double v = static_cast<double>(boundary) / (0.05 * h * w);
    (*out.data)[static_cast<size_t>(b)] = static_cast<T>(v < 1.0 ? v : 1.0);
  }
  return out;
}

template <typename T>
LossBreakdownT<T> total_loss(const LossPartsT<T>& parts, const LossWeights& w) {
  if (parts.score.shape != parts.target_score.shape) {
    fail(ErrorCode::Shape, "total_loss: score/target shape mismatch");
  }
  LossBreakdownT<T> out;
  out.main = parts.main;
  out.aux = parts.aux;

  TensorT<T> err = sub(parts.score, parts.target_score.detached());
  std::vector<int> all_axes(static_cast<size_t>(err.rank()));
  for (int i = 0; i < err.rank(); ++i) all_axes[static_cast<size_t>(i)] = i;
  out.complexity = reduce_mean(mul(err, err), all_axes, false);

  out.diversity = TensorT<T>::full(
      {}, static_cast<T>(diversity_reward(parts.masks.detached(), parts.max_groups)));
  out.flow = flow_smooth_loss(parts.masks);
  out.stdp = parts.stdp.defined() ? parts.stdp : TensorT<T>::zeros({});

  TensorT<T> total = add(out.main, affine(out.aux, static_cast<T>(w.aux), T(0)));
  total = add(total, affine(out.complexity, static_cast<T>(w.complexity), T(0)));
  total = sub(total, affine(out.diversity, static_cast<T>(w.diversity), T(0)));
  total = add(total, affine(out.flow, static_cast<T>(w.flow), T(0)));
  if (parts.stdp.defined()) {
    total = add(total, affine(out.stdp, static_cast<T>(w.stdp), T(0)));
  }
  out.total = total;
  return out;
}

#define TAUFLOW_INSTANTIATE_LOSSES(T)                                                      \
  template TensorT<T> dice_loss<T>(const TensorT<T>&, const TensorT<T>&);                  \
  template TensorT<T> focal_loss<T>(const TensorT<T>&, const TensorT<T>&, double, double); \
  template TensorT<T> dice_focal_loss<T>(const TensorT<T>&, const TensorT<T>&, double,     \
                                         double);                                          \
  template TensorT<T> flow_smooth_loss<T>(const TensorT<T>&);                              \
  template double diversity_reward<T>(const TensorT<T>&, int);                             \
  template TensorT<T> complexity_target<T>(const TensorT<T>&);                             \
  template LossBreakdownT<T> total_loss<T>(const LossPartsT<T>&, const LossWeights&);

TAUFLOW_INSTANTIATE_LOSSES(float)
TAUFLOW_INSTANTIATE_LOSSES(double)

#undef TAUFLOW_INSTANTIATE_LOSSES

}  // namespace tauflow
