#include "core/attention.hpp"

#include <cmath>

namespace tauflow {

template <typename T>
TauAttentionT<T> TauAttentionT<T>::build(ParamStoreT<T>& store, const ModelConfig& cfg, Rng& rng) {
  TauAttentionT<T> a;
  a.qk_dim = cfg.qk_dim;
  a.max_groups = cfg.max_groups;
  const int C = cfg.ltc_channels();
  const double bound = 1.0 / std::sqrt(static_cast<double>(C));
  a.q_w = &store.add_uniform("attention.q.w", {cfg.qk_dim, C, 1, 1}, bound, rng);
  a.k_w = &store.add_uniform("attention.k.w", {cfg.qk_dim, C, 1, 1}, bound, rng);
  a.score_map = LinearLayerT<T>::make(store, "attention.score", cfg.qk_dim, 1, rng);
  a.mix_qk = &store.add_full("attention.mix_qk", {1}, T(1));
  a.mix_mass = &store.add_full("attention.mix_mass", {1}, T(1));
  a.mix_tau = &store.add_full("attention.mix_tau", {1}, T(1));
  a.zero_bias_ = TensorT<T>::zeros({cfg.qk_dim});
  return a;
}

template <typename T>
AttentionOutputT<T> TauAttentionT<T>::forward(CtxT<T>& ctx, const TensorT<T>& u,
                                              const TensorT<T>& masks, const TensorT<T>& tau,
                                              int G) const {
  if (u.rank() != 5) fail(ErrorCode::Shape, "attention: grouped features must be rank 5");
  const int B = u.dim(0), gmax = u.dim(1), C = u.dim(2), h = u.dim(3), w = u.dim(4);
  if (gmax != max_groups) fail(ErrorCode::Shape, "attention: group extent mismatch");
  if (masks.shape != Shape{B, gmax, h, w}) fail(ErrorCode::Shape, "attention: masks " + shape_str(masks.shape));
  if (tau.rank() != 4 || tau.dim(0) != B || tau.dim(2) != h || tau.dim(3) != w) {
    fail(ErrorCode::Shape, "attention: tau field " + shape_str(tau.shape));
  }
  if (G < 1 || G > gmax) fail(ErrorCode::InvalidArgument, "attention: bad active group count");

  TensorT<T> qw = ctx.use(*q_w);
  TensorT<T> kw = ctx.use(*k_w);
  TensorT<T> wa = reshape(ctx.use(*mix_qk), {1, 1});
  TensorT<T> wb = reshape(ctx.use(*mix_mass), {1, 1});
  TensorT<T> wc = reshape(ctx.use(*mix_tau), {1, 1});
  TensorT<T> tau_bar = reduce_mean(tau, {1}, true);  // [B,1,h,w]

  std::vector<TensorT<T>> scores;
  scores.reserve(static_cast<size_t>(gmax));
  for (int g = 0; g < gmax; ++g) {
    TensorT<T> qk_mean;
    if (g < G) {
      TensorT<T> u_g = reshape(slice(u, 1, g, 1), {B, C, h, w});
      TensorT<T> q = reduce_mean(conv2d(u_g, qw, zero_bias_, 1, 0, 1), {2, 3}, false);  // [B,qk]
      TensorT<T> k = reduce_mean(conv2d(u_g, kw, zero_bias_, 1, 0, 1), {2, 3}, false);
      qk_mean = mul(q, k);
    } else {
      // inactive slice is exactly zero; bias-free projections of zero are zero
      qk_mean = TensorT<T>::zeros({B, qk_dim});
    }
    TensorT<T> base = score_map(ctx, qk_mean);  // [B,1]

    TensorT<T> mask_g = slice(masks, 1, g, 1);                                  // [B,1,h,w]
    TensorT<T> mpool = reshape(reduce_mean(mask_g, {1, 2, 3}, false), {B, 1});  // [B,1]
    TensorT<T> num = reduce_sum(mul(mask_g, tau_bar), {1, 2, 3}, false);        // [B]
    TensorT<T> den = affine(reduce_sum(mask_g, {1, 2, 3}, false), T(1), static_cast<T>(1e-6));
    TensorT<T> tau_mean = reshape(div(num, den), {B, 1});

    TensorT<T> s = add(add(mul(base, wa), mul(mpool, wb)), mul(tau_mean, wc));
    scores.push_back(s);
  }

  AttentionOutputT<T> out;
  out.attn = sigmoid(concat<T>(scores, 1));  // [B,Gmax]
  TensorT<T> attn5 = reshape(out.attn, {B, gmax, 1, 1, 1});
  out.u_weighted = mul(u, attn5);
  return out;
}

template struct TauAttentionT<float>;
template struct TauAttentionT<double>;
template struct AttentionOutputT<float>;
template struct AttentionOutputT<double>;

}  // namespace tauflow
