// Bridge between the encoder and the temporal core: learned positional
// embedding, concatenated cell input, and the pooled initial hidden state.
#pragma once

#include "core/config.hpp"
#include "core/nn.hpp"

namespace tauflow {

template <typename T>
struct InterfaceOutputT {
  TensorT<T> ltc_input;  // [B,Cb+emb,S/4,S/4]
  TensorT<T> s0;         // [B,hidden,S/4,S/4], spatially constant per channel
  TensorT<T> pos_emb;    // [B,emb,S/4,S/4]
};

template <typename T>
struct FlowInterfaceT {
  ConvLayerT<T> pos_conv;   // 1 -> emb, pos_kernel, same padding
  LinearLayerT<T> s0_map;   // Cb -> hidden
  int emb = 16;
  int hidden = 64;
  int feat = 56;

  static FlowInterfaceT build(ParamStoreT<T>& store, const ModelConfig& cfg, Rng& rng);

  TensorT<T> positional_embedding(CtxT<T>& ctx, int batch) const;
  TensorT<T> ltc_input(const TensorT<T>& f3, const TensorT<T>& pos) const;
  TensorT<T> init_state(CtxT<T>& ctx, const TensorT<T>& f3) const;
  InterfaceOutputT<T> forward(CtxT<T>& ctx, const TensorT<T>& f3) const;
};

}  // namespace tauflow
