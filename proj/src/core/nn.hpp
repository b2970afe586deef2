// Parameter registry, forward context, and thin layer bundles on top of the
// tensor ops. Parameters are plain tensors; a forward binds them to a tape as
// leaves on first use, so one context = one differentiable forward.
#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/tensor.hpp"

namespace tauflow {

template <typename T>
struct ParamT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;  // set after a backward pass; empty until then
};

template <typename T>
class ParamStoreT {
public:
  ParamT<T>& add_uniform(const std::string& name, const Shape& shape, double bound, Rng& rng) {
    auto p = std::make_unique<ParamT<T>>();
    p->name = name;
    p->value = TensorT<T>::zeros(shape);
    for (auto& v : *p->value.data) v = static_cast<T>(rng.uniform(-bound, bound));
    items_.push_back(std::move(p));
    return *items_.back();
  }

  ParamT<T>& add_full(const std::string& name, const Shape& shape, T fill) {
    auto p = std::make_unique<ParamT<T>>();
    p->name = name;
    p->value = TensorT<T>::full(shape, fill);
    items_.push_back(std::move(p));
    return *items_.back();
  }

  size_t size() const { return items_.size(); }
  ParamT<T>& at(size_t i) { return *items_[i]; }
  const ParamT<T>& at(size_t i) const { return *items_[i]; }

  ParamT<T>* find(const std::string& name) {
    for (auto& p : items_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }

  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& p : items_) n += p->value.numel();
    return n;
  }

private:
  std::vector<std::unique_ptr<ParamT<T>>> items_;
};

// One differentiable forward: tape==nullptr means plain inference.
template <typename T>
struct CtxT {
  TapeT<T>* tape = nullptr;
  bool training = false;

  TensorT<T> use(ParamT<T>& p) {
    if (!tape) return p.value;
    auto it = bound_.find(&p);
    if (it != bound_.end()) return it->second;
    TensorT<T> leaf = tape->leaf(p.value, true);
    bound_.emplace(&p, leaf);
    by_node_.emplace(leaf.node, &p);
    return leaf;
  }

  // Moves tape gradients into ParamT::grad (zeros for untouched leaves).
  void collect_grads(std::unordered_map<int, TensorT<T>>& grad_map) {
    for (auto& [node, param] : by_node_) {
      auto it = grad_map.find(node);
      param->grad = it != grad_map.end() ? it->second : TensorT<T>::zeros(param->value.shape);
    }
  }

private:
  std::unordered_map<ParamT<T>*, TensorT<T>> bound_;
  std::unordered_map<int, ParamT<T>*> by_node_;
};

template <typename T>
struct ConvLayerT {
  ParamT<T>* w = nullptr;
  ParamT<T>* b = nullptr;
  int stride = 1;
  int pad = 0;
  int groups = 1;

  static ConvLayerT make(ParamStoreT<T>& store, const std::string& name, int cin, int cout, int k,
                         int stride, int pad, Rng& rng, int groups = 1) {
    ConvLayerT layer;
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin / groups) * k * k);
    layer.w = &store.add_uniform(name + ".w", {cout, cin / groups, k, k}, bound, rng);
    layer.b = &store.add_uniform(name + ".b", {cout}, bound, rng);
    layer.stride = stride;
    layer.pad = pad;
    layer.groups = groups;
    return layer;
  }

  TensorT<T> operator()(CtxT<T>& ctx, const TensorT<T>& x) const {
    return conv2d(x, ctx.use(*w), ctx.use(*b), stride, pad, groups);
  }
};

template <typename T>
struct LinearLayerT {
  ParamT<T>* w = nullptr;
  ParamT<T>* b = nullptr;

  static LinearLayerT make(ParamStoreT<T>& store, const std::string& name, int fin, int fout,
                           Rng& rng) {
    LinearLayerT layer;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fin));
    layer.w = &store.add_uniform(name + ".w", {fout, fin}, bound, rng);
    layer.b = &store.add_uniform(name + ".b", {fout}, bound, rng);
    return layer;
  }

  TensorT<T> operator()(CtxT<T>& ctx, const TensorT<T>& x) const {
    return linear(x, ctx.use(*w), ctx.use(*b));
  }
};

template <typename T>
struct GroupNormLayerT {
  ParamT<T>* gamma = nullptr;
  ParamT<T>* beta = nullptr;
  int groups = 8;

  static GroupNormLayerT make(ParamStoreT<T>& store, const std::string& name, int channels,
                              int groups) {
    GroupNormLayerT layer;
    layer.gamma = &store.add_full(name + ".gamma", {channels}, T(1));
    layer.beta = &store.add_full(name + ".beta", {channels}, T(0));
    layer.groups = groups;
    return layer;
  }

  TensorT<T> operator()(CtxT<T>& ctx, const TensorT<T>& x) const {
    return group_norm(x, groups, ctx.use(*gamma), ctx.use(*beta));
  }
};

}  // namespace tauflow
