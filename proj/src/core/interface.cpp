#include "core/interface.hpp"

namespace tauflow {

template <typename T>
FlowInterfaceT<T> FlowInterfaceT<T>::build(ParamStoreT<T>& store, const ModelConfig& cfg, Rng& rng) {
  FlowInterfaceT<T> f;
  f.emb = cfg.group_embed_dim;
  f.hidden = cfg.hidden_channels;
  f.feat = cfg.feat_size();
  f.pos_conv = ConvLayerT<T>::make(store, "interface.pos_conv", 1, cfg.group_embed_dim,
                                   cfg.pos_kernel, 1, cfg.pos_kernel / 2, rng);
  f.s0_map = LinearLayerT<T>::make(store, "interface.s0_map", cfg.base_channel,
                                   cfg.hidden_channels, rng);
  return f;
}

template <typename T>
TensorT<T> FlowInterfaceT<T>::positional_embedding(CtxT<T>& ctx, int batch) const {
  TensorT<T> ones = TensorT<T>::full({batch, 1, feat, feat}, T(1));
  return pos_conv(ctx, ones);
}

template <typename T>
TensorT<T> FlowInterfaceT<T>::ltc_input(const TensorT<T>& f3, const TensorT<T>& pos) const {
  if (f3.rank() != 4 || pos.rank() != 4 || f3.dim(0) != pos.dim(0) || f3.dim(2) != pos.dim(2) ||
      f3.dim(3) != pos.dim(3)) {
    fail(ErrorCode::Shape,
         "ltc_input: f3 " + shape_str(f3.shape) + " vs pos " + shape_str(pos.shape));
  }
  return concat<T>({f3, pos}, 1);
}

template <typename T>
TensorT<T> FlowInterfaceT<T>::init_state(CtxT<T>& ctx, const TensorT<T>& f3) const {
  const int B = f3.dim(0);
  TensorT<T> pooled = reduce_mean(f3, {2, 3}, false);          // [B,Cb]
  TensorT<T> vec = tanh_op(s0_map(ctx, pooled));               // [B,hidden]
  TensorT<T> v4 = reshape(vec, {B, hidden, 1, 1});
  return expand(v4, {B, hidden, f3.dim(2), f3.dim(3)});
}

template <typename T>
InterfaceOutputT<T> FlowInterfaceT<T>::forward(CtxT<T>& ctx, const TensorT<T>& f3) const {
  InterfaceOutputT<T> out;
  out.pos_emb = positional_embedding(ctx, f3.dim(0));
  out.ltc_input = ltc_input(f3, out.pos_emb);
  out.s0 = init_state(ctx, f3);
  return out;
}

template struct FlowInterfaceT<float>;
template struct FlowInterfaceT<double>;

}  // namespace tauflow
