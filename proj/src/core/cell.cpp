#include "core/cell.hpp"

#include <cmath>

namespace tauflow {

template <typename T>
ConvLtcCellT<T> ConvLtcCellT<T>::build(ParamStoreT<T>& store, const ModelConfig& cfg, Rng& rng) {
  ConvLtcCellT<T> cell;
  cell.dt = cfg.dt;
  cell.tau_min = cfg.tau_min;
  cell.tau_max = cfg.tau_max;
  cell.time_steps = cfg.time_steps;
  const int C = cfg.ltc_channels();
  const int hidden = cfg.hidden_channels;
  cell.tau_cell = ConvLayerT<T>::make(store, "cell.tau", C, hidden, 1, 1, 0, rng);
  cell.w_u = ConvLayerT<T>::make(store, "cell.input", C, hidden, 1, 1, 0, rng);
  cell.w_s_dw = ConvLayerT<T>::make(store, "cell.state_dw", hidden, hidden, 3, 1, 1, rng, hidden);
  cell.w_s_pw = ConvLayerT<T>::make(store, "cell.state_pw", hidden, hidden, 1, 1, 0, rng);
  cell.out_norm = GroupNormLayerT<T>::make(store, "cell.norm", hidden, 8);
  cell.proj = ConvLayerT<T>::make(store, "cell.proj", hidden, hidden, 1, 1, 0, rng);
  cell.out_proj = ConvLayerT<T>::make(store, "cell.out", hidden, cfg.base_channel, 1, 1, 0, rng);
  return cell;
}

template <typename T>
TensorT<T> ConvLtcCellT<T>::compute_group_tau(CtxT<T>& ctx, const TensorT<T>& u_g) const {
  TensorT<T> raw = tau_cell(ctx, u_g);
  return clamp(affine(softplus(raw), T(1), static_cast<T>(1e-6)), static_cast<T>(tau_min),
               static_cast<T>(tau_max));
}

template <typename T>
TensorT<T> ConvLtcCellT<T>::step(CtxT<T>& ctx, const TensorT<T>& s, const TensorT<T>& drive,
                                 const TensorT<T>& tau_g) const {
  TensorT<T> f = tanh_op(add(w_s_pw(ctx, w_s_dw(ctx, s)), drive));
  // eta = min(dt/tau, 1); tau > 0, so a [0,1] clamp realizes the cap
  TensorT<T> dt_field = TensorT<T>::full(tau_g.shape, static_cast<T>(dt));
  TensorT<T> eta = clamp(div(dt_field, tau_g), T(0), T(1));
  return add(mul(affine(eta, T(-1), T(1)), s), mul(eta, f));
}

template <typename T>
CellOutputT<T> ConvLtcCellT<T>::evolve_and_fuse(CtxT<T>& ctx, const TensorT<T>& u_weighted,
                                                const TensorT<T>& masks, const TensorT<T>& s0,
                                                int G) const {
  if (u_weighted.rank() != 5) fail(ErrorCode::Shape, "cell: grouped features must be rank 5");
  const int B = u_weighted.dim(0), gmax = u_weighted.dim(1), C = u_weighted.dim(2);
  const int h = u_weighted.dim(3), w = u_weighted.dim(4);
  if (masks.shape != Shape{B, gmax, h, w}) fail(ErrorCode::Shape, "cell: masks " + shape_str(masks.shape));
  if (s0.rank() != 4 || s0.dim(0) != B || s0.dim(2) != h || s0.dim(3) != w) {
    fail(ErrorCode::Shape, "cell: initial state " + shape_str(s0.shape));
  }
  if (G < 1 || G > gmax) fail(ErrorCode::InvalidArgument, "cell: bad active group count");
  if (time_steps < 1) fail(ErrorCode::Config, "cell: need at least one time step");

  CellOutputT<T> out;
  out.trace.states.resize(static_cast<size_t>(G));
  out.trace.inputs.reserve(static_cast<size_t>(G));
  out.trace.taus.reserve(static_cast<size_t>(G));

  TensorT<T> fused;
  for (int g = 0; g < G; ++g) {
    TensorT<T> u_g = reshape(slice(u_weighted, 1, g, 1), {B, C, h, w});
    TensorT<T> tau_g = compute_group_tau(ctx, u_g);
    TensorT<T> drive = w_u(ctx, u_g);

    auto& states = out.trace.states[static_cast<size_t>(g)];
    states.push_back(s0);
    TensorT<T> s = s0;
    for (int t = 0; t < time_steps; ++t) {
      s = step(ctx, s, drive, tau_g);
      states.push_back(s);
    }

    TensorT<T> out_g = out_proj(ctx, proj(ctx, out_norm(ctx, s)));  // [B,base,h,w]
    TensorT<T> mask_g = slice(masks, 1, g, 1);                      // [B,1,h,w]
    TensorT<T> term = mul(mask_g, out_g);
    fused = g == 0 ? term : add(fused, term);

    out.trace.inputs.push_back(u_g);
    out.trace.taus.push_back(tau_g);
  }
  out.fused = fused;
  return out;
}

template struct ConvLtcCellT<float>;
template struct ConvLtcCellT<double>;

}  // namespace tauflow
