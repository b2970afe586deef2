// Dense tensors plus a reverse-mode tape. Everything is row-major,
// single-threaded, and deterministic: reductions run left-to-right in
// memory order and no op reads uninitialized storage.
//
// Tensors hold a shared buffer and optionally point at a tape node. Ops are
// free functions; if any input lives on a tape the output is recorded there,
// otherwise the op is a plain eager computation. A tape can be consumed by
// backward() exactly once.
//
// Lifetime rule: TensorT::tape is non-owning. Values stay readable after the
// tape dies, but backward() must run while the tape is alive.
#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "core/common.hpp"

namespace tauflow {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

template <typename T>
class TapeT;

template <typename T>
struct TensorT {
  Shape shape;
  std::shared_ptr<std::vector<T>> data;
  TapeT<T>* tape = nullptr;
  int node = -1;

  TensorT() = default;

  static TensorT zeros(const Shape& s);
  static TensorT full(const Shape& s, T v);
  static TensorT from(const Shape& s, std::vector<T> values);

  bool defined() const { return static_cast<bool>(data); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const;
  int64_t numel() const { return data ? static_cast<int64_t>(data->size()) : 0; }
  T* ptr() { return data->data(); }
  const T* ptr() const { return data->data(); }
  T scalar() const;
  T at(std::initializer_list<int> idx) const;
  bool on_tape() const { return tape != nullptr && node >= 0; }

  // Same buffer, no tape association.
  TensorT detached() const {
    TensorT t;
    t.shape = shape;
    t.data = data;
    return t;
  }

  TensorT value_copy() const;
};

template <typename T>
class TapeT {
public:
  using BackwardFn = std::function<void(TapeT&, int self)>;

  TapeT() = default;
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  // Registers an input tensor. Only leaves with requires_grad show up in the
  // map returned by backward(); a leaf never touched by the loss gets zeros.
  TensorT<T> leaf(const TensorT<T>& value, bool requires_grad);

  int push(const Shape& out_shape, std::vector<int> inputs, BackwardFn fn);

  // Gradient buffer for a node, zero-allocated on first touch.
  std::vector<T>& grad(int node);
  bool has_grad(int node) const;
  const Shape& node_shape(int node) const;

  // Single-shot reverse sweep from a scalar loss. Visits nodes in reverse
  // creation order, skipping anything the loss never reached.
  std::unordered_map<int, TensorT<T>> backward(const TensorT<T>& loss);

  size_t node_count() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

private:
  struct Node {
    Shape shape;
    std::vector<int> inputs;
    BackwardFn back;
    bool grad_leaf = false;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  std::vector<int> leaves_;
  bool consumed_ = false;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

// ---- op surface ----------------------------------------------------------

template <typename T>
void check_finite(const TensorT<T>& x, const char* op);

// y = conv2d(x, k) + b. x:[B,Cin,H,W], k:[Cout,Cin/groups,kh,kw], b:[Cout].
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& k, const TensorT<T>& b,
                  int stride, int padding, int groups = 1);

// y = x . W^T + b. x:[B,Fin], w:[Fout,Fin], b:[Fout].
template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b);

template <typename T> TensorT<T> sigmoid(const TensorT<T>& x);
template <typename T> TensorT<T> tanh_op(const TensorT<T>& x);
template <typename T> TensorT<T> relu(const TensorT<T>& x);
template <typename T> TensorT<T> softplus(const TensorT<T>& x);
template <typename T> TensorT<T> exp_op(const TensorT<T>& x);
template <typename T> TensorT<T> log_op(const TensorT<T>& x);
template <typename T> TensorT<T> sqrt_op(const TensorT<T>& x);
template <typename T> TensorT<T> abs_op(const TensorT<T>& x);
// y = x * scale + shift
template <typename T> TensorT<T> affine(const TensorT<T>& x, T scale, T shift);
// Subgradient is 1 strictly inside (lo, hi) and 0 at or beyond the bounds.
template <typename T> TensorT<T> clamp(const TensorT<T>& x, T lo, T hi);

template <typename T> TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> div(const TensorT<T>& a, const TensorT<T>& b);

// Softmax along `axis`. The per-element temperature must broadcast against x
// with extent 1 on `axis`; entries must be strictly positive. Gradient flows
// to x only; the temperature is treated as data.
template <typename T>
TensorT<T> softmax_axis(const TensorT<T>& x, int axis);
template <typename T>
TensorT<T> softmax_axis(const TensorT<T>& x, int axis, const TensorT<T>& temperature);

template <typename T>
TensorT<T> reduce_mean(const TensorT<T>& x, const std::vector<int>& axes, bool keepdims);
template <typename T>
TensorT<T> reduce_sum(const TensorT<T>& x, const std::vector<int>& axes, bool keepdims);

// Normalizes over channel groups of a [B,C,H,W] tensor; gamma/beta are [C].
template <typename T>
TensorT<T> group_norm(const TensorT<T>& x, int num_groups, const TensorT<T>& gamma,
                      const TensorT<T>& beta, T eps = static_cast<T>(1e-5));

// Half-pixel bilinear resample of [B,C,H,W] to [B,C,oh,ow], edge-clamped taps.
template <typename T>
TensorT<T> bilinear_resize(const TensorT<T>& x, int oh, int ow);

template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, int axis);
template <typename T>
TensorT<T> slice(const TensorT<T>& x, int axis, int start, int len);

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, const Shape& s);
// Broadcasts extents of 1 up to the target shape (same rank).
template <typename T>
TensorT<T> expand(const TensorT<T>& x, const Shape& s);

// Central finite differences of a scalar-valued pure function, one probe pair
// per element of x. Rejects non-finite probes.
template <typename T>
TensorT<T> finite_diff_gradient(const std::function<T(const TensorT<T>&)>& f,
                                const TensorT<T>& x, T eps);

// max over elements of |a-f| / max(|a|, |f|, floor)
template <typename T>
T max_rel_err(const TensorT<T>& a, const TensorT<T>& f, T floor_ = static_cast<T>(1e-2));

}  // namespace tauflow
