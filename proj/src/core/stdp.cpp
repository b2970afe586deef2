#include "core/stdp.hpp"

namespace tauflow {

template <typename T>
TensorT<T> StdpRegularizerT<T>::pixel_events(const TensorT<T>& x, double theta) const {
  if (x.rank() != 4) fail(ErrorCode::Shape, "stdp: event input must be rank 4");
  TensorT<T> mu = reduce_mean(x, {2, 3}, true);
  TensorT<T> centered = sub(x, expand(mu, x.shape));
  TensorT<T> var = reduce_mean(mul(centered, centered), {2, 3}, true);
  // var floor keeps constant maps finite: they standardize to exactly zero
  TensorT<T> denom = affine(sqrt_op(affine(var, T(1), static_cast<T>(1e-10))), T(1),
                            static_cast<T>(1e-5));
  TensorT<T> z = div(centered, expand(denom, x.shape));
  TensorT<T> zbar = reduce_mean(z, {1}, true);  // [B,1,h,w]
  const T k = static_cast<T>(cfg.kappa);
  return sigmoid(affine(zbar, k, static_cast<T>(-cfg.kappa * theta)));
}

template <typename T>
EventMapsT<T> StdpRegularizerT<T>::event_approx(const CellTraceT<T>& trace) const {
  const int G = static_cast<int>(trace.states.size());
  if (G < 1 || trace.inputs.size() != trace.states.size()) {
    fail(ErrorCode::InvalidArgument, "stdp: malformed cell trace");
  }
  const int steps = static_cast<int>(trace.states[0].size()) - 1;
  if (steps < 2) fail(ErrorCode::InvalidArgument, "stdp: need at least two time steps");

  std::vector<TensorT<T>> pre_groups, post_groups;
  pre_groups.reserve(static_cast<size_t>(G));
  post_groups.reserve(static_cast<size_t>(G));
  for (int g = 0; g < G; ++g) {
    const auto& states = trace.states[static_cast<size_t>(g)];
    if (static_cast<int>(states.size()) != steps + 1) {
      fail(ErrorCode::InvalidArgument, "stdp: ragged state history");
    }
    const TensorT<T>& u_g = trace.inputs[static_cast<size_t>(g)];
    const int B = u_g.dim(0), h = u_g.dim(2), w = u_g.dim(3);

    // the input never changes across steps, so the pre map repeats along t
    TensorT<T> pre = reshape(pixel_events(u_g, cfg.theta_u), {B, 1, 1, h, w});
    std::vector<TensorT<T>> pre_t(static_cast<size_t>(steps), pre);
    pre_groups.push_back(concat<T>(pre_t, 2));

    std::vector<TensorT<T>> post_t;
    post_t.reserve(static_cast<size_t>(steps));
    for (int t = 1; t <= steps; ++t) {
      post_t.push_back(
          reshape(pixel_events(states[static_cast<size_t>(t)], cfg.theta_s), {B, 1, 1, h, w}));
    }
    post_groups.push_back(concat<T>(post_t, 2));
  }

  EventMapsT<T> out;
  out.e_pre = concat<T>(pre_groups, 1);
  out.e_post = concat<T>(post_groups, 1);
  return out;
}

template <typename T>
TensorT<T> StdpRegularizerT<T>::combine(const TensorT<T>& e_pre, const TensorT<T>& e_post,
                                        const std::vector<TensorT<T>>& taus) const {
  if (e_pre.rank() != 5 || e_pre.shape != e_post.shape) {
    fail(ErrorCode::Shape, "stdp: event tensors must be rank 5 and congruent");
  }
  const int B = e_pre.dim(0), G = e_pre.dim(1), steps = e_pre.dim(2);
  const int h = e_pre.dim(3), w = e_pre.dim(4);
  if (steps < 2) fail(ErrorCode::InvalidArgument, "stdp: need at least two time steps");
  if (static_cast<int>(taus.size()) != G) fail(ErrorCode::Shape, "stdp: one tau field per group");

  std::vector<TensorT<T>> tbars;
  tbars.reserve(taus.size());
  for (const auto& tau : taus) tbars.push_back(reduce_mean(tau, {1}, true));  // [B,1,h,w]
  TensorT<T> tbar = concat<T>(tbars, 1);                                      // [B,G,h,w]
  TensorT<T> gmean = reduce_mean(tbar, {0, 1, 2, 3}, true);
  TensorT<T> weights = reshape(div(tbar, expand(gmean, tbar.shape)), {B, G, 1, h, w});

  const T beta = static_cast<T>(cfg.beta);
  TensorT<T> acc;
  for (int t = 0; t + 1 < steps; ++t) {
    TensorT<T> causal = mul(slice(e_pre, 2, t, 1), slice(e_post, 2, t + 1, 1));
    TensorT<T> anti = mul(slice(e_pre, 2, t + 1, 1), slice(e_post, 2, t, 1));
    TensorT<T> term = sub(causal, affine(anti, beta, T(0)));
    acc = t == 0 ? term : add(acc, term);
  }
  TensorT<T> total = reduce_sum(mul(weights, acc), {0, 1, 2, 3, 4}, false);
  const double z = static_cast<double>(B) * G * h * w * (steps - 1);
  return affine(total, static_cast<T>(-1.0 / z), T(0));
}

template <typename T>
TensorT<T> StdpRegularizerT<T>::loss(const EventMapsT<T>& events,
                                     const std::vector<TensorT<T>>& taus) const {
  return combine(events.e_pre, events.e_post, taus);
}

template <typename T>
TensorT<T> StdpRegularizerT<T>::supervised_loss(const EventMapsT<T>& events,
                                                const std::vector<TensorT<T>>& taus,
                                                const TensorT<T>& target_feat) const {
  const int B = events.e_post.dim(0), G = events.e_post.dim(1), steps = events.e_post.dim(2);
  const int h = events.e_post.dim(3), w = events.e_post.dim(4);
  if (target_feat.shape != Shape{B, 1, h, w}) {
    fail(ErrorCode::Shape, "stdp: target must be [B,1,h,w], got " + shape_str(target_feat.shape));
  }
  const T rho = static_cast<T>(cfg.rho);
  TensorT<T> y5 = expand(reshape(target_feat, {B, 1, 1, h, w}), {B, G, steps, h, w});
  TensorT<T> blended = add(affine(events.e_post, T(1) - rho, T(0)), affine(y5, rho, T(0)));
  return combine(events.e_pre, blended, taus);
}

template struct StdpRegularizerT<float>;
template struct StdpRegularizerT<double>;

}  // namespace tauflow
