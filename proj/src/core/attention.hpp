// Group-level gating: pooled QK interaction, mask mass, and mask-weighted
// time-constant statistics combine into one sigmoid weight per group. The
// gate is non-competitive: groups do not compete for a fixed budget.
#pragma once

#include "core/config.hpp"
#include "core/nn.hpp"

namespace tauflow {

template <typename T>
struct AttentionOutputT {
  TensorT<T> attn;        // [B,Gmax], every entry strictly inside (0,1)
  TensorT<T> u_weighted;  // [B,Gmax,C,h,w] = attn[b,g] * u[b,g]
};

template <typename T>
struct TauAttentionT {
  ParamT<T>* q_w = nullptr;  // [qk,C,1,1]; no bias, so zero input gives zero query
  ParamT<T>* k_w = nullptr;
  LinearLayerT<T> score_map;  // qk -> 1
  ParamT<T>* mix_qk = nullptr;    // scalar weights on the three score terms,
  ParamT<T>* mix_mass = nullptr;  // all starting at one
  ParamT<T>* mix_tau = nullptr;
  int qk_dim = 7;
  int max_groups = 5;

  static TauAttentionT build(ParamStoreT<T>& store, const ModelConfig& cfg, Rng& rng);

  // u: [B,Gmax,C,h,w] grouped features; masks: [B,Gmax,h,w]; tau: [B,*,h,w].
  // Groups past G skip their projections: their feature slice is exactly zero,
  // so the pooled query/key are zero by construction.
  AttentionOutputT<T> forward(CtxT<T>& ctx, const TensorT<T>& u, const TensorT<T>& masks,
                              const TensorT<T>& tau, int G) const;

private:
  TensorT<T> zero_bias_;  // stand-in bias for the bias-free projections
};

}  // namespace tauflow
