// Encoder producing the three-scale feature pyramid and the decoder emitting
// main + auxiliary segmentation logits.
#pragma once

#include "core/config.hpp"
#include "core/nn.hpp"

namespace tauflow {

template <typename T>
struct PyramidT {
  TensorT<T> f1;  // [B,Cb,S,S]
  TensorT<T> f2;  // [B,Cb,S/2,S/2]
  TensorT<T> f3;  // [B,Cb,S/4,S/4]
};

template <typename T>
struct SegOutputsT {
  TensorT<T> seg_logits;  // [B,1,S,S]
  TensorT<T> aux_logits;  // [B,1,S/2,S/2]
};

template <typename T>
struct BackboneT {
  ConvLayerT<T> e1a, e1b, e2a, e2b, e3a, e3b;
  GroupNormLayerT<T> e1a_n, e1b_n, e2a_n, e2b_n, e3a_n, e3b_n;
  ConvLayerT<T> dec2, dec1;          // 3x3 blocks after skip concat
  GroupNormLayerT<T> dec2_n, dec1_n;
  ConvLayerT<T> aux_head, seg_head;  // 1x1 -> 1
  int input_size = 224;

  static BackboneT build(ParamStoreT<T>& store, const ModelConfig& cfg, Rng& rng);

  PyramidT<T> encode(CtxT<T>& ctx, const TensorT<T>& image) const;
  SegOutputsT<T> decode(CtxT<T>& ctx, const TensorT<T>& fused, const TensorT<T>& f2,
                        const TensorT<T>& f1) const;
};

using Backbone = BackboneT<float>;

}  // namespace tauflow
