// Per-group convolutional liquid-time-constant cell. Each active group takes
// the shared initial state, evolves it T explicit-Euler steps under its own
// time-constant field, and the per-group outputs fuse back through the masks.
//
// The Euler step uses the effective rate eta = min(dt/tau, 1), which turns the
// update into a convex combination (1-eta)*s + eta*tanh(...). That keeps the
// state inside [-1,1] whenever the initial state starts there, for any
// parameters and any number of steps.
#pragma once

#include <vector>

#include "core/config.hpp"
#include "core/nn.hpp"

namespace tauflow {

template <typename T>
struct CellTraceT {
  // states[g][t] for t = 0..T inclusive; states[g][0] is the shared s0
  std::vector<std::vector<TensorT<T>>> states;
  std::vector<TensorT<T>> inputs;  // u_g actually fed to each active group
  std::vector<TensorT<T>> taus;    // per-group time-constant fields
};

template <typename T>
struct CellOutputT {
  TensorT<T> fused;  // [B,base,h,w]
  CellTraceT<T> trace;
};

template <typename T>
struct ConvLtcCellT {
  ConvLayerT<T> tau_cell;  // 1x1 C -> hidden
  ConvLayerT<T> w_u;       // 1x1 C -> hidden, input drive (constant per forward)
  ConvLayerT<T> w_s_dw;    // depthwise 3x3 hidden -> hidden
  ConvLayerT<T> w_s_pw;    // 1x1 hidden -> hidden
  GroupNormLayerT<T> out_norm;
  ConvLayerT<T> proj;      // 1x1 hidden -> hidden
  ConvLayerT<T> out_proj;  // 1x1 hidden -> base
  double dt = 1.0;
  double tau_min = 1e-2;
  double tau_max = 1e3;
  int time_steps = 2;

  static ConvLtcCellT build(ParamStoreT<T>& store, const ModelConfig& cfg, Rng& rng);

  // clamp(softplus(conv(u_g)) + 1e-6, tau_min, tau_max), shape [B,hidden,h,w]
  TensorT<T> compute_group_tau(CtxT<T>& ctx, const TensorT<T>& u_g) const;

  // One Euler step. drive = W_u(u_g) is supplied precomputed since the input
  // does not change across steps.
  TensorT<T> step(CtxT<T>& ctx, const TensorT<T>& s, const TensorT<T>& drive,
                  const TensorT<T>& tau_g) const;

  // u_weighted: [B,Gmax,C,h,w]; masks: [B,Gmax,h,w]; s0: [B,hidden,h,w].
  CellOutputT<T> evolve_and_fuse(CtxT<T>& ctx, const TensorT<T>& u_weighted,
                                 const TensorT<T>& masks, const TensorT<T>& s0, int G) const;
};

}  // namespace tauflow
