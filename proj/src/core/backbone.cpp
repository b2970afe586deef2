#include "core/backbone.hpp"

namespace tauflow {

template <typename T>
BackboneT<T> BackboneT<T>::build(ParamStoreT<T>& store, const ModelConfig& cfg, Rng& rng) {
  BackboneT<T> bb;
  bb.input_size = cfg.input_size;
  const int cb = cfg.base_channel;
  auto conv = [&](const std::string& name, int cin, int cout, int k, int stride) {
    return ConvLayerT<T>::make(store, name, cin, cout, k, stride, k / 2, rng);
  };
  auto norm = [&](const std::string& name, int c) {
    return GroupNormLayerT<T>::make(store, name, c, 8);
  };
  bb.e1a = conv("backbone.enc1a", 3, cb, 3, 1);
  bb.e1a_n = norm("backbone.enc1a_norm", cb);
  bb.e1b = conv("backbone.enc1b", cb, cb, 3, 1);
  bb.e1b_n = norm("backbone.enc1b_norm", cb);
  bb.e2a = conv("backbone.enc2a", cb, cb, 3, 2);
  bb.e2a_n = norm("backbone.enc2a_norm", cb);
  bb.e2b = conv("backbone.enc2b", cb, cb, 3, 1);
  bb.e2b_n = norm("backbone.enc2b_norm", cb);
  bb.e3a = conv("backbone.enc3a", cb, cb, 3, 2);
  bb.e3a_n = norm("backbone.enc3a_norm", cb);
  bb.e3b = conv("backbone.enc3b", cb, cb, 3, 1);
  bb.e3b_n = norm("backbone.enc3b_norm", cb);
  bb.dec2 = conv("backbone.dec2", 2 * cb, cb, 3, 1);
  bb.dec2_n = norm("backbone.dec2_norm", cb);
  bb.dec1 = conv("backbone.dec1", 2 * cb, cb, 3, 1);
  bb.dec1_n = norm("backbone.dec1_norm", cb);
  bb.aux_head = conv("backbone.aux_head", cb, 1, 1, 1);
  bb.seg_head = conv("backbone.seg_head", cb, 1, 1, 1);
  return bb;
}

template <typename T>
PyramidT<T> BackboneT<T>::encode(CtxT<T>& ctx, const TensorT<T>& image) const {
  if (image.rank() != 4 || image.dim(1) != 3 || image.dim(2) != input_size ||
      image.dim(3) != input_size) {
    fail(ErrorCode::Shape, "encode: expected [B,3," + std::to_string(input_size) + "," +
                               std::to_string(input_size) + "], got " + shape_str(image.shape));
  }
  auto block = [&](const ConvLayerT<T>& c, const GroupNormLayerT<T>& n, const TensorT<T>& x) {
    return relu(n(ctx, c(ctx, x)));
  };
  PyramidT<T> p;
  p.f1 = block(e1b, e1b_n, block(e1a, e1a_n, image));
  p.f2 = block(e2b, e2b_n, block(e2a, e2a_n, p.f1));
  p.f3 = block(e3b, e3b_n, block(e3a, e3a_n, p.f2));
  return p;
}

template <typename T>
SegOutputsT<T> BackboneT<T>::decode(CtxT<T>& ctx, const TensorT<T>& fused, const TensorT<T>& f2,
                                    const TensorT<T>& f1) const {
  if (fused.rank() != 4 || f2.rank() != 4 || f1.rank() != 4) {
    fail(ErrorCode::Shape, "decode: expected rank-4 inputs");
  }
  if (fused.dim(2) * 2 != f2.dim(2) || f2.dim(2) * 2 != f1.dim(2) || fused.dim(1) != f2.dim(1) ||
      f2.dim(1) != f1.dim(1)) {
    fail(ErrorCode::Shape, "decode: pyramid shapes inconsistent with fused " + shape_str(fused.shape));
  }
  TensorT<T> up2 = bilinear_resize(fused, f2.dim(2), f2.dim(3));
  TensorT<T> d2 = relu(dec2_n(ctx, dec2(ctx, concat<T>({up2, f2}, 1))));
  SegOutputsT<T> out;
  out.aux_logits = aux_head(ctx, d2);
  TensorT<T> up1 = bilinear_resize(d2, f1.dim(2), f1.dim(3));
  TensorT<T> d1 = relu(dec1_n(ctx, dec1(ctx, concat<T>({up1, f1}, 1))));
  out.seg_logits = seg_head(ctx, d1);
  return out;
}

template struct BackboneT<float>;
template struct BackboneT<double>;

}  // namespace tauflow
