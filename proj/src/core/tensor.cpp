#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace tauflow {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

static void validate_shape(const Shape& s, const char* who) {
  for (int d : s) {
    if (d <= 0) fail(ErrorCode::Shape, std::string(who) + ": non-positive extent in " + shape_str(s));
  }
}

static std::vector<int64_t> row_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
    st[i] = st[i + 1] * s[i + 1];
  }
  return st;
}

// ---- TensorT -------------------------------------------------------------

template <typename T>
TensorT<T> TensorT<T>::zeros(const Shape& s) {
  validate_shape(s, "zeros");
  TensorT t;
  t.shape = s;
  t.data = std::make_shared<std::vector<T>>(static_cast<size_t>(shape_numel(s)), T(0));
  return t;
}

template <typename T>
TensorT<T> TensorT<T>::full(const Shape& s, T v) {
  TensorT t = zeros(s);
  std::fill(t.data->begin(), t.data->end(), v);
  return t;
}

template <typename T>
TensorT<T> TensorT<T>::from(const Shape& s, std::vector<T> values) {
  validate_shape(s, "from");
  if (static_cast<int64_t>(values.size()) != shape_numel(s)) {
    fail(ErrorCode::Shape, "from: value count " + std::to_string(values.size()) +
                               " does not match " + shape_str(s));
  }
  TensorT t;
  t.shape = s;
  t.data = std::make_shared<std::vector<T>>(std::move(values));
  return t;
}

template <typename T>
int TensorT<T>::dim(int i) const {
  if (i < 0 || i >= rank()) fail(ErrorCode::Shape, "dim: axis out of range");
  return shape[static_cast<size_t>(i)];
}

template <typename T>
T TensorT<T>::scalar() const {
  if (numel() != 1) fail(ErrorCode::Shape, "scalar: tensor has " + std::to_string(numel()) + " elements");
  return (*data)[0];
}

template <typename T>
T TensorT<T>::at(std::initializer_list<int> idx) const {
  if (static_cast<int>(idx.size()) != rank()) fail(ErrorCode::Shape, "at: rank mismatch");
  auto st = row_strides(shape);
  int64_t off = 0;
  int i = 0;
  for (int v : idx) {
    if (v < 0 || v >= shape[static_cast<size_t>(i)]) fail(ErrorCode::Shape, "at: index out of range");
    off += st[static_cast<size_t>(i)] * v;
    ++i;
  }
  return (*data)[static_cast<size_t>(off)];
}

template <typename T>
TensorT<T> TensorT<T>::value_copy() const {
  TensorT t;
  t.shape = shape;
  if (data) t.data = std::make_shared<std::vector<T>>(*data);
  return t;
}

// ---- TapeT ---------------------------------------------------------------

template <typename T>
TensorT<T> TapeT<T>::leaf(const TensorT<T>& value, bool requires_grad) {
  if (!value.defined()) fail(ErrorCode::InvalidArgument, "leaf: undefined tensor");
  TensorT<T> out;
  out.shape = value.shape;
  out.data = value.data;
  out.tape = this;
  Node n;
  n.shape = value.shape;
  n.grad_leaf = requires_grad;
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  out.node = static_cast<int>(nodes_.size()) - 1;
  if (requires_grad) leaves_.push_back(out.node);
  return out;
}

template <typename T>
int TapeT<T>::push(const Shape& out_shape, std::vector<int> inputs, BackwardFn fn) {
  for (int i : inputs) {
    if (i < 0 || i >= static_cast<int>(nodes_.size())) {
      fail(ErrorCode::Internal, "tape: input node out of range");
    }
  }
  Node n;
  n.shape = out_shape;
  n.inputs = std::move(inputs);
  n.back = std::move(fn);
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  return static_cast<int>(nodes_.size()) - 1;
}

template <typename T>
std::vector<T>& TapeT<T>::grad(int node) {
  auto& g = grads_[static_cast<size_t>(node)];
  if (g.empty()) g.assign(static_cast<size_t>(shape_numel(nodes_[static_cast<size_t>(node)].shape)), T(0));
  return g;
}

template <typename T>
bool TapeT<T>::has_grad(int node) const {
  return !grads_[static_cast<size_t>(node)].empty();
}

template <typename T>
const Shape& TapeT<T>::node_shape(int node) const {
  return nodes_[static_cast<size_t>(node)].shape;
}

template <typename T>
std::unordered_map<int, TensorT<T>> TapeT<T>::backward(const TensorT<T>& loss) {
  if (consumed_) fail(ErrorCode::InvalidArgument, "backward: tape already consumed");
  if (loss.tape != this || loss.node < 0) fail(ErrorCode::InvalidArgument, "backward: loss not on this tape");
  if (loss.numel() != 1) fail(ErrorCode::Shape, "backward: loss must be scalar, got " + shape_str(loss.shape));
  if (!std::isfinite(static_cast<double>(loss.scalar()))) fail(ErrorCode::Numeric, "backward: non-finite loss");
  consumed_ = true;

  grad(loss.node)[0] = T(1);
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    auto& n = nodes_[static_cast<size_t>(i)];
    if (!n.back) continue;
    if (!has_grad(i)) continue;  // loss never reached this node
    n.back(*this, i);
  }

  std::unordered_map<int, TensorT<T>> out;
  for (int id : leaves_) {
    TensorT<T> g = TensorT<T>::zeros(nodes_[static_cast<size_t>(id)].shape);
    if (has_grad(id)) {
      std::copy(grads_[static_cast<size_t>(id)].begin(), grads_[static_cast<size_t>(id)].end(),
                g.data->begin());
    }
    out.emplace(id, std::move(g));
  }
  return out;
}

// ---- shared op helpers ----------------------------------------------------

template <typename T>
void check_finite(const TensorT<T>& x, const char* op) {
  if (!x.defined()) fail(ErrorCode::InvalidArgument, std::string(op) + ": undefined tensor");
  const T* p = x.ptr();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(static_cast<double>(p[i]))) {
      fail(ErrorCode::Numeric, std::string(op) + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

template <typename T>
static TapeT<T>* result_tape(std::initializer_list<const TensorT<T>*> ins, const char* op) {
  TapeT<T>* tape = nullptr;
  for (const TensorT<T>* t : ins) {
    if (!t->on_tape()) continue;
    if (tape && tape != t->tape) fail(ErrorCode::InvalidArgument, std::string(op) + ": inputs on different tapes");
    tape = t->tape;
  }
  return tape;
}

// ---- pointwise -------------------------------------------------------------

// fwd(x) -> y, dfn(x, y) -> dy/dx
template <typename T, typename F, typename D>
static TensorT<T> pointwise(const TensorT<T>& x, const char* op, F&& fwd, D&& dfn,
                            bool check_output = false) {
  check_finite(x, op);
  TensorT<T> y = TensorT<T>::zeros(x.shape);
  const T* xp = x.ptr();
  T* yp = y.ptr();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) yp[i] = fwd(xp[i]);
  if (check_output) check_finite(y, op);
  if (x.on_tape()) {
    auto xd = x.data;
    auto yd = y.data;
    int xn = x.node;
    y.tape = x.tape;
    y.node = x.tape->push(y.shape, {xn}, [xd, yd, xn, dfn, n](TapeT<T>& tp, int self) {
      const auto& up = tp.grad(self);
      auto& gx = tp.grad(xn);
      const T* xv = xd->data();
      const T* yv = yd->data();
      for (int64_t i = 0; i < n; ++i) gx[static_cast<size_t>(i)] += up[static_cast<size_t>(i)] * dfn(xv[i], yv[i]);
    });
  }
  return y;
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& x) {
  return pointwise(
      x, "sigmoid",
      [](T v) {
        if (v >= T(0)) {
          T e = std::exp(-v);
          return T(1) / (T(1) + e);
        }
        T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
TensorT<T> tanh_op(const TensorT<T>& x) {
  return pointwise(
      x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  return pointwise(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
TensorT<T> softplus(const TensorT<T>& x) {
  // log1p(exp(x)) with a linear tail so large inputs cannot overflow
  return pointwise(
      x, "softplus",
      [](T v) {
        if (v > T(30)) return v;
        if (v < T(-30)) return std::exp(v);
        return std::log1p(std::exp(v));
      },
      [](T v, T) {
        if (v >= T(0)) {
          T e = std::exp(-v);
          return T(1) / (T(1) + e);
        }
        T e = std::exp(v);
        return e / (T(1) + e);
      });
}

template <typename T>
TensorT<T> exp_op(const TensorT<T>& x) {
  return pointwise(
      x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; }, true);
}

template <typename T>
TensorT<T> log_op(const TensorT<T>& x) {
  return pointwise(
      x, "log", [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; }, true);
}

template <typename T>
TensorT<T> sqrt_op(const TensorT<T>& x) {
  return pointwise(
      x, "sqrt", [](T v) { return std::sqrt(v); }, [](T, T y) { return T(1) / (T(2) * y); }, true);
}

template <typename T>
TensorT<T> abs_op(const TensorT<T>& x) {
  return pointwise(
      x, "abs", [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
TensorT<T> affine(const TensorT<T>& x, T scale, T shift) {
  if (!std::isfinite(static_cast<double>(scale)) || !std::isfinite(static_cast<double>(shift))) {
    fail(ErrorCode::Numeric, "affine: non-finite coefficients");
  }
  return pointwise(
      x, "affine", [scale, shift](T v) { return v * scale + shift; },
      [scale](T, T) { return scale; });
}

template <typename T>
TensorT<T> clamp(const TensorT<T>& x, T lo, T hi) {
  if (!(lo < hi)) fail(ErrorCode::InvalidArgument, "clamp: lo must be < hi");
  return pointwise(
      x, "clamp", [lo, hi](T v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](T v, T) { return (v > lo && v < hi) ? T(1) : T(0); });
}

// ---- broadcast binary ------------------------------------------------------

static Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a.size() != b.size()) {
    fail(ErrorCode::Shape, std::string(op) + ": rank mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
  Shape out(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) {
      out[i] = a[i];
    } else if (a[i] == 1 || b[i] == 1) {
      out[i] = std::max(a[i], b[i]);
    } else {
      fail(ErrorCode::Shape, std::string(op) + ": incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
    }
  }
  return out;
}

// Strides for reading `in` as if broadcast to `out` (0 on stretched axes).
static std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  auto st = row_strides(in);
  for (size_t i = 0; i < in.size(); ++i) {
    if (in[i] == 1 && out[i] != 1) st[i] = 0;
  }
  return st;
}

// Walks the output of a broadcast op in row-major order, handing the functor
// contiguous inner runs: f(out_base, a_base, a_step, b_base, b_step, run_len).
template <typename F>
static void broadcast_runs(const Shape& out, const Shape& a, const Shape& b, F&& f) {
  const int rank = static_cast<int>(out.size());
  const int64_t total = shape_numel(out);
  if (rank == 0) {
    f(0, 0, 1, 0, 1, 1);
    return;
  }
  auto sa = broadcast_strides(a, out);
  auto sb = broadcast_strides(b, out);
  const int inner_axis = rank - 1;
  const int64_t inner = out[static_cast<size_t>(inner_axis)];
  const int64_t outer = total / inner;
  std::vector<int> idx(static_cast<size_t>(rank), 0);
  for (int64_t o = 0; o < outer; ++o) {
    int64_t ao = 0, bo = 0;
    for (int ax = 0; ax < inner_axis; ++ax) {
      ao += sa[static_cast<size_t>(ax)] * idx[static_cast<size_t>(ax)];
      bo += sb[static_cast<size_t>(ax)] * idx[static_cast<size_t>(ax)];
    }
    f(o * inner, ao, sa[static_cast<size_t>(inner_axis)], bo, sb[static_cast<size_t>(inner_axis)], inner);
    for (int ax = inner_axis - 1; ax >= 0; --ax) {
      if (++idx[static_cast<size_t>(ax)] < out[static_cast<size_t>(ax)]) break;
      idx[static_cast<size_t>(ax)] = 0;
    }
  }
}

enum class BinKind { Add, Sub, Mul, Div };

template <typename T>
static TensorT<T> binary_op(const TensorT<T>& a, const TensorT<T>& b, BinKind kind, const char* op) {
  check_finite(a, op);
  check_finite(b, op);
  Shape os = broadcast_shape(a.shape, b.shape, op);
  TensorT<T> y = TensorT<T>::zeros(os);
  const T* ap = a.ptr();
  const T* bp = b.ptr();
  T* yp = y.ptr();
  broadcast_runs(os, a.shape, b.shape,
                 [&](int64_t ob, int64_t ab, int64_t as, int64_t bb, int64_t bs, int64_t len) {
                   switch (kind) {
                     case BinKind::Add:
                       for (int64_t i = 0; i < len; ++i) yp[ob + i] = ap[ab + i * as] + bp[bb + i * bs];
                       break;
                     case BinKind::Sub:
                       for (int64_t i = 0; i < len; ++i) yp[ob + i] = ap[ab + i * as] - bp[bb + i * bs];
                       break;
                     case BinKind::Mul:
                       for (int64_t i = 0; i < len; ++i) yp[ob + i] = ap[ab + i * as] * bp[bb + i * bs];
                       break;
                     case BinKind::Div:
                       for (int64_t i = 0; i < len; ++i) yp[ob + i] = ap[ab + i * as] / bp[bb + i * bs];
                       break;
                   }
                 });
  if (kind == BinKind::Div) check_finite(y, op);

  TapeT<T>* tape = result_tape<T>({&a, &b}, op);
  if (tape) {
    auto ad = a.data;
    auto bd = b.data;
    Shape ash = a.shape, bsh = b.shape, osh = os;
    int an = a.on_tape() ? a.node : -1;
    int bn = b.on_tape() ? b.node : -1;
    y.tape = tape;
    y.node = tape->push(os, [&] {
      std::vector<int> ins;
      if (an >= 0) ins.push_back(an);
      if (bn >= 0) ins.push_back(bn);
      return ins;
    }(), [ad, bd, ash, bsh, osh, an, bn, kind](TapeT<T>& tp, int self) {
      const auto& up = tp.grad(self);
      const T* av = ad->data();
      const T* bv = bd->data();
      T* ga = an >= 0 ? tp.grad(an).data() : nullptr;
      T* gb = bn >= 0 ? tp.grad(bn).data() : nullptr;
      broadcast_runs(osh, ash, bsh,
                     [&](int64_t ob, int64_t ab, int64_t as, int64_t bb, int64_t bs, int64_t len) {
                       for (int64_t i = 0; i < len; ++i) {
                         const T u = up[static_cast<size_t>(ob + i)];
                         const int64_t ai = ab + i * as;
                         const int64_t bi = bb + i * bs;
                         switch (kind) {
                           case BinKind::Add:
                             if (ga) ga[ai] += u;
                             if (gb) gb[bi] += u;
                             break;
                           case BinKind::Sub:
                             if (ga) ga[ai] += u;
                             if (gb) gb[bi] -= u;
                             break;
                           case BinKind::Mul:
                             if (ga) ga[ai] += u * bv[bi];
                             if (gb) gb[bi] += u * av[ai];
                             break;
                           case BinKind::Div: {
                             const T inv = T(1) / bv[bi];
                             if (ga) ga[ai] += u * inv;
                             if (gb) gb[bi] -= u * av[ai] * inv * inv;
                             break;
                           }
                         }
                       }
                     });
    });
  }
  return y;
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) { return binary_op(a, b, BinKind::Add, "add"); }
template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) { return binary_op(a, b, BinKind::Sub, "sub"); }
template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) { return binary_op(a, b, BinKind::Mul, "mul"); }
template <typename T>
TensorT<T> div(const TensorT<T>& a, const TensorT<T>& b) { return binary_op(a, b, BinKind::Div, "div"); }

// ---- conv2d ----------------------------------------------------------------

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& k, const TensorT<T>& b,
                  int stride, int padding, int groups) {
  check_finite(x, "conv2d");
  check_finite(k, "conv2d");
  check_finite(b, "conv2d");
  if (x.rank() != 4 || k.rank() != 4 || b.rank() != 1) {
    fail(ErrorCode::Shape, "conv2d: expected x rank 4, kernel rank 4, bias rank 1");
  }
  if (stride < 1 || padding < 0 || groups < 1) fail(ErrorCode::InvalidArgument, "conv2d: bad stride/padding/groups");
  const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = k.dim(0), Kci = k.dim(1), KH = k.dim(2), KW = k.dim(3);
  if (Cin % groups != 0 || Cout % groups != 0) fail(ErrorCode::Shape, "conv2d: channels not divisible by groups");
  if (Kci != Cin / groups) {
    fail(ErrorCode::Shape, "conv2d: kernel expects " + std::to_string(Kci) + " input channels per group, got " +
                               std::to_string(Cin / groups));
  }
  if (b.dim(0) != Cout) fail(ErrorCode::Shape, "conv2d: bias size mismatch");
  const int OH = (H + 2 * padding - KH) / stride + 1;
  const int OW = (W + 2 * padding - KW) / stride + 1;
  if (OH < 1 || OW < 1) fail(ErrorCode::Shape, "conv2d: output would be empty");

  TensorT<T> y = TensorT<T>::zeros({B, Cout, OH, OW});
  const T* xp = x.ptr();
  const T* kp = k.ptr();
  const T* bp = b.ptr();
  T* yp = y.ptr();
  const int cin_g = Cin / groups;
  const int cout_g = Cout / groups;

  for (int bi = 0; bi < B; ++bi) {
    for (int co = 0; co < Cout; ++co) {
      const int g = co / cout_g;
      T* out_plane = yp + (static_cast<int64_t>(bi) * Cout + co) * OH * OW;
      const T bias_v = bp[co];
      for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i) out_plane[i] = bias_v;
      for (int cir = 0; cir < cin_g; ++cir) {
        const int ci = g * cin_g + cir;
        const T* in_plane = xp + (static_cast<int64_t>(bi) * Cin + ci) * H * W;
        const T* kslab = kp + ((static_cast<int64_t>(co) * cin_g + cir) * KH) * KW;
        for (int ky = 0; ky < KH; ++ky) {
          for (int kx = 0; kx < KW; ++kx) {
            const T wv = kslab[ky * KW + kx];
            if (wv == T(0)) continue;
            const int off_x = kx - padding;
            // valid ox range: 0 <= ox*stride + off_x < W
            int lo = 0;
            if (off_x < 0) lo = (-off_x + stride - 1) / stride;
            int hi = OW;
            {
              const int max_num = W - 1 - off_x;
              if (max_num < 0) continue;
              hi = std::min(hi, max_num / stride + 1);
            }
            for (int oy = 0; oy < OH; ++oy) {
              const int iy = oy * stride - padding + ky;
              if (iy < 0 || iy >= H) continue;
              const T* in_row = in_plane + static_cast<int64_t>(iy) * W;
              T* out_row = out_plane + static_cast<int64_t>(oy) * OW;
              if (stride == 1) {
                const T* src = in_row + off_x;
                for (int ox = lo; ox < hi; ++ox) out_row[ox] += wv * src[ox];
              } else {
                for (int ox = lo; ox < hi; ++ox) out_row[ox] += wv * in_row[ox * stride + off_x];
              }
            }
          }
        }
      }
    }
  }

  TapeT<T>* tape = result_tape<T>({&x, &k, &b}, "conv2d");
  if (tape) {
    auto xd = x.data;
    auto kd = k.data;
    int xn = x.on_tape() ? x.node : -1;
    int kn = k.on_tape() ? k.node : -1;
    int bn = b.on_tape() ? b.node : -1;
    std::vector<int> ins;
    for (int id : {xn, kn, bn}) {
      if (id >= 0) ins.push_back(id);
    }
    y.tape = tape;
    y.node = tape->push(
        y.shape, ins,
        [xd, kd, xn, kn, bn, B, Cin, H, W, Cout, cin_g, cout_g, KH, KW, OH, OW, stride,
         padding](TapeT<T>& tp, int self) {
          const auto& up = tp.grad(self);
          const T* xv = xd->data();
          const T* kv = kd->data();
          T* gx = xn >= 0 ? tp.grad(xn).data() : nullptr;
          T* gk = kn >= 0 ? tp.grad(kn).data() : nullptr;
          T* gb = bn >= 0 ? tp.grad(bn).data() : nullptr;

          if (gb) {
            for (int bi = 0; bi < B; ++bi) {
              for (int co = 0; co < Cout; ++co) {
                const T* up_plane = up.data() + (static_cast<int64_t>(bi) * Cout + co) * OH * OW;
                T s = T(0);
                for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i) s += up_plane[i];
                gb[co] += s;
              }
            }
          }
          for (int bi = 0; bi < B; ++bi) {
            for (int co = 0; co < Cout; ++co) {
              const int g = co / cout_g;
              const T* up_plane = up.data() + (static_cast<int64_t>(bi) * Cout + co) * OH * OW;
              for (int cir = 0; cir < cin_g; ++cir) {
                const int ci = g * cin_g + cir;
                const T* in_plane = xv + (static_cast<int64_t>(bi) * Cin + ci) * H * W;
                T* gx_plane = gx ? gx + (static_cast<int64_t>(bi) * Cin + ci) * H * W : nullptr;
                const int64_t kbase = (static_cast<int64_t>(co) * cin_g + cir) * KH * KW;
                for (int ky = 0; ky < KH; ++ky) {
                  for (int kx = 0; kx < KW; ++kx) {
                    const int off_x = kx - padding;
                    int lo = 0;
                    if (off_x < 0) lo = (-off_x + stride - 1) / stride;
                    int hi = OW;
                    const int max_num = W - 1 - off_x;
                    if (max_num < 0) continue;
                    hi = std::min(hi, max_num / stride + 1);
                    if (lo >= hi) continue;
                    const T wv = kv[kbase + ky * KW + kx];
                    T ksum = T(0);
                    for (int oy = 0; oy < OH; ++oy) {
                      const int iy = oy * stride - padding + ky;
                      if (iy < 0 || iy >= H) continue;
                      const T* up_row = up_plane + static_cast<int64_t>(oy) * OW;
                      const T* in_row = in_plane + static_cast<int64_t>(iy) * W;
                      if (gx_plane) {
                        T* gx_row = gx_plane + static_cast<int64_t>(iy) * W;
                        if (stride == 1) {
                          T* dst = gx_row + off_x;
                          for (int ox = lo; ox < hi; ++ox) dst[ox] += wv * up_row[ox];
                        } else {
                          for (int ox = lo; ox < hi; ++ox) gx_row[ox * stride + off_x] += wv * up_row[ox];
                        }
                      }
                      if (gk) {
                        if (stride == 1) {
                          const T* src = in_row + off_x;
                          for (int ox = lo; ox < hi; ++ox) ksum += up_row[ox] * src[ox];
                        } else {
                          for (int ox = lo; ox < hi; ++ox) ksum += up_row[ox] * in_row[ox * stride + off_x];
                        }
                      }
                    }
                    if (gk) gk[kbase + ky * KW + kx] += ksum;
                  }
                }
              }
            }
          }
        });
  }
  return y;
}

// ---- linear ----------------------------------------------------------------

template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  check_finite(x, "linear");
  check_finite(w, "linear");
  check_finite(b, "linear");
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1) fail(ErrorCode::Shape, "linear: expected ranks 2/2/1");
  const int B = x.dim(0), Fin = x.dim(1);
  const int Fout = w.dim(0);
  if (w.dim(1) != Fin || b.dim(0) != Fout) {
    fail(ErrorCode::Shape, "linear: shape mismatch x" + shape_str(x.shape) + " w" + shape_str(w.shape));
  }
  TensorT<T> y = TensorT<T>::zeros({B, Fout});
  const T* xp = x.ptr();
  const T* wp = w.ptr();
  const T* bp = b.ptr();
  T* yp = y.ptr();
  for (int bi = 0; bi < B; ++bi) {
    for (int fo = 0; fo < Fout; ++fo) {
      const T* xrow = xp + static_cast<int64_t>(bi) * Fin;
      const T* wrow = wp + static_cast<int64_t>(fo) * Fin;
      T s = bp[fo];
      for (int fi = 0; fi < Fin; ++fi) s += xrow[fi] * wrow[fi];
      yp[static_cast<int64_t>(bi) * Fout + fo] = s;
    }
  }
  TapeT<T>* tape = result_tape<T>({&x, &w, &b}, "linear");
  if (tape) {
    auto xd = x.data;
    auto wd = w.data;
    int xn = x.on_tape() ? x.node : -1;
    int wn = w.on_tape() ? w.node : -1;
    int bn = b.on_tape() ? b.node : -1;
    std::vector<int> ins;
    for (int id : {xn, wn, bn}) {
      if (id >= 0) ins.push_back(id);
    }
    y.tape = tape;
    y.node = tape->push(y.shape, ins, [xd, wd, xn, wn, bn, B, Fin, Fout](TapeT<T>& tp, int self) {
      const auto& up = tp.grad(self);
      const T* xv = xd->data();
      const T* wv = wd->data();
      T* gx = xn >= 0 ? tp.grad(xn).data() : nullptr;
      T* gw = wn >= 0 ? tp.grad(wn).data() : nullptr;
      T* gb = bn >= 0 ? tp.grad(bn).data() : nullptr;
      for (int bi = 0; bi < B; ++bi) {
        const T* urow = up.data() + static_cast<int64_t>(bi) * Fout;
        for (int fo = 0; fo < Fout; ++fo) {
          const T u = urow[fo];
          if (u == T(0)) continue;
          if (gb) gb[fo] += u;
          const T* wrow = wv + static_cast<int64_t>(fo) * Fin;
          const T* xrow = xv + static_cast<int64_t>(bi) * Fin;
          if (gx) {
            T* gxr = gx + static_cast<int64_t>(bi) * Fin;
            for (int fi = 0; fi < Fin; ++fi) gxr[fi] += u * wrow[fi];
          }
          if (gw) {
            T* gwr = gw + static_cast<int64_t>(fo) * Fin;
            for (int fi = 0; fi < Fin; ++fi) gwr[fi] += u * xrow[fi];
          }
        }
      }
    });
  }
  return y;
}

// ---- softmax ---------------------------------------------------------------

template <typename T>
static TensorT<T> softmax_impl(const TensorT<T>& x, int axis, const TensorT<T>* temp) {
  check_finite(x, "softmax");
  if (axis < 0 || axis >= x.rank()) fail(ErrorCode::Shape, "softmax: axis out of range");
  const int64_t n_axis = x.dim(axis);
  auto st = row_strides(x.shape);
  const int64_t axis_stride = st[static_cast<size_t>(axis)];
  const int64_t total = x.numel();
  const int64_t n_slots = total / n_axis;
  std::vector<int64_t> tstrides;
  if (temp) {
    check_finite(*temp, "softmax");
    if (temp->rank() != x.rank()) fail(ErrorCode::Shape, "softmax: temperature rank mismatch");
    for (int i = 0; i < x.rank(); ++i) {
      const int te = temp->dim(i);
      if (i == axis) {
        if (te != 1) fail(ErrorCode::Shape, "softmax: temperature must have extent 1 on softmax axis");
      } else if (te != x.dim(i) && te != 1) {
        fail(ErrorCode::Shape, "softmax: temperature shape incompatible");
      }
    }
    for (const T v : *temp->data) {
      if (!(v > T(0))) fail(ErrorCode::Numeric, "softmax: temperature must be strictly positive");
    }
    tstrides = broadcast_strides(temp->shape, x.shape);
  }

  // enumerate slot base offsets (all indices with axis index 0)
  std::vector<int64_t> base(static_cast<size_t>(n_slots));
  std::vector<int64_t> tbase(temp ? static_cast<size_t>(n_slots) : 0);
  {
    std::vector<int> idx(static_cast<size_t>(x.rank()), 0);
    int64_t slot = 0;
    bool done = false;
    while (!done) {
      int64_t off = 0, toff = 0;
      for (int i = 0; i < x.rank(); ++i) {
        off += st[static_cast<size_t>(i)] * idx[static_cast<size_t>(i)];
        if (temp) toff += tstrides[static_cast<size_t>(i)] * idx[static_cast<size_t>(i)];
      }
      base[static_cast<size_t>(slot)] = off;
      if (temp) tbase[static_cast<size_t>(slot)] = toff;
      ++slot;
      done = true;
      for (int i = x.rank() - 1; i >= 0; --i) {
        if (i == axis) continue;
        if (++idx[static_cast<size_t>(i)] < x.dim(i)) {
          done = false;
          break;
        }
        idx[static_cast<size_t>(i)] = 0;
      }
    }
  }

  TensorT<T> y = TensorT<T>::zeros(x.shape);
  const T* xp = x.ptr();
  const T* tp_ = temp ? temp->ptr() : nullptr;
  T* yp = y.ptr();
  std::vector<T> inv_temp(static_cast<size_t>(n_slots), T(1));
  for (int64_t s = 0; s < n_slots; ++s) {
    const int64_t b0 = base[static_cast<size_t>(s)];
    T tv = temp ? tp_[tbase[static_cast<size_t>(s)]] : T(1);
    const T inv = T(1) / tv;
    inv_temp[static_cast<size_t>(s)] = inv;
    T mx = xp[b0];
    for (int64_t i = 1; i < n_axis; ++i) mx = std::max(mx, xp[b0 + i * axis_stride]);
    T denom = T(0);
    for (int64_t i = 0; i < n_axis; ++i) {
      const T e = std::exp((xp[b0 + i * axis_stride] - mx) * inv);
      yp[b0 + i * axis_stride] = e;
      denom += e;
    }
    const T dn = T(1) / denom;
    for (int64_t i = 0; i < n_axis; ++i) yp[b0 + i * axis_stride] *= dn;
  }

  if (x.on_tape()) {
    auto yd = y.data;
    int xn = x.node;
    y.tape = x.tape;
    y.node = x.tape->push(y.shape, {xn},
                          [yd, xn, base, inv_temp, n_axis, axis_stride](TapeT<T>& tp, int self) {
                            const auto& up = tp.grad(self);
                            auto& gx = tp.grad(xn);
                            const T* yv = yd->data();
                            for (size_t s = 0; s < base.size(); ++s) {
                              const int64_t b0 = base[s];
                              T dot = T(0);
                              for (int64_t i = 0; i < n_axis; ++i) {
                                const int64_t o = b0 + i * axis_stride;
                                dot += up[static_cast<size_t>(o)] * yv[o];
                              }
                              const T inv = inv_temp[s];
                              for (int64_t i = 0; i < n_axis; ++i) {
                                const int64_t o = b0 + i * axis_stride;
                                gx[static_cast<size_t>(o)] +=
                                    inv * yv[o] * (up[static_cast<size_t>(o)] - dot);
                              }
                            }
                          });
  }
  return y;
}

template <typename T>
TensorT<T> softmax_axis(const TensorT<T>& x, int axis) {
  return softmax_impl<T>(x, axis, nullptr);
}

template <typename T>
TensorT<T> softmax_axis(const TensorT<T>& x, int axis, const TensorT<T>& temperature) {
  return softmax_impl<T>(x, axis, &temperature);
}

// ---- reductions -------------------------------------------------------------

template <typename T>
static TensorT<T> reduce_impl(const TensorT<T>& x, const std::vector<int>& axes, bool keepdims,
                              bool mean, const char* op) {
  check_finite(x, op);
  if (axes.empty()) fail(ErrorCode::InvalidArgument, std::string(op) + ": empty axis list");
  std::vector<bool> reduced(static_cast<size_t>(x.rank()), false);
  for (int a : axes) {
    if (a < 0 || a >= x.rank()) fail(ErrorCode::Shape, std::string(op) + ": axis out of range");
    if (reduced[static_cast<size_t>(a)]) fail(ErrorCode::InvalidArgument, std::string(op) + ": repeated axis");
    reduced[static_cast<size_t>(a)] = true;
  }

  Shape kept = x.shape;
  int64_t count = 1;
  for (int i = 0; i < x.rank(); ++i) {
    if (reduced[static_cast<size_t>(i)]) {
      count *= x.dim(i);
      kept[static_cast<size_t>(i)] = 1;
    }
  }
  Shape out_shape;
  if (keepdims) {
    out_shape = kept;
  } else {
    for (int i = 0; i < x.rank(); ++i) {
      if (!reduced[static_cast<size_t>(i)]) out_shape.push_back(x.dim(i));
    }
    // reducing everything yields a rank-0 scalar
  }

  TensorT<T> y;
  y.shape = out_shape;
  y.data = std::make_shared<std::vector<T>>(static_cast<size_t>(shape_numel(out_shape)), T(0));

  // map each input element to its output slot; out strides follow kept shape
  auto in_st = row_strides(x.shape);
  auto kept_st = row_strides(kept);
  for (size_t i = 0; i < kept.size(); ++i) {
    if (kept[i] == 1) kept_st[i] = 0;
  }
  const T* xp = x.ptr();
  T* yp = y.ptr();
  const int64_t total = x.numel();
  {
    std::vector<int> idx(static_cast<size_t>(x.rank()), 0);
    for (int64_t flat = 0; flat < total; ++flat) {
      int64_t o = 0;
      for (int i = 0; i < x.rank(); ++i) o += kept_st[static_cast<size_t>(i)] * idx[static_cast<size_t>(i)];
      yp[o] += xp[flat];
      for (int i = x.rank() - 1; i >= 0; --i) {
        if (++idx[static_cast<size_t>(i)] < x.dim(i)) break;
        idx[static_cast<size_t>(i)] = 0;
      }
    }
  }
  const T scale = mean ? T(1) / static_cast<T>(count) : T(1);
  if (mean) {
    for (auto& v : *y.data) v *= scale;
  }

  if (x.on_tape()) {
    int xn = x.node;
    Shape xs = x.shape;
    y.tape = x.tape;
    y.node = x.tape->push(y.shape, {xn}, [xn, xs, kept_st, scale](TapeT<T>& tp, int self) {
      const auto& up = tp.grad(self);
      auto& gx = tp.grad(xn);
      const int rank = static_cast<int>(xs.size());
      std::vector<int> idx(static_cast<size_t>(rank), 0);
      const int64_t total = shape_numel(xs);
      for (int64_t flat = 0; flat < total; ++flat) {
        int64_t o = 0;
        for (int i = 0; i < rank; ++i) o += kept_st[static_cast<size_t>(i)] * idx[static_cast<size_t>(i)];
        gx[static_cast<size_t>(flat)] += up[static_cast<size_t>(o)] * scale;
        for (int i = rank - 1; i >= 0; --i) {
          if (++idx[static_cast<size_t>(i)] < xs[static_cast<size_t>(i)]) break;
          idx[static_cast<size_t>(i)] = 0;
        }
      }
    });
  }
  return y;
}

template <typename T>
TensorT<T> reduce_mean(const TensorT<T>& x, const std::vector<int>& axes, bool keepdims) {
  return reduce_impl(x, axes, keepdims, true, "reduce_mean");
}
template <typename T>
TensorT<T> reduce_sum(const TensorT<T>& x, const std::vector<int>& axes, bool keepdims) {
  return reduce_impl(x, axes, keepdims, false, "reduce_sum");
}

// ---- reshape / expand -------------------------------------------------------

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, const Shape& s) {
  validate_shape(s, "reshape");
  if (shape_numel(s) != x.numel()) {
    fail(ErrorCode::Shape, "reshape: cannot view " + shape_str(x.shape) + " as " + shape_str(s));
  }
  TensorT<T> y;
  y.shape = s;
  y.data = x.data;
  if (x.on_tape()) {
    int xn = x.node;
    y.tape = x.tape;
    y.node = x.tape->push(s, {xn}, [xn](TapeT<T>& tp, int self) {
      const auto& up = tp.grad(self);
      auto& gx = tp.grad(xn);
      for (size_t i = 0; i < up.size(); ++i) gx[i] += up[i];
    });
  }
  return y;
}

template <typename T>
TensorT<T> expand(const TensorT<T>& x, const Shape& s) {
  validate_shape(s, "expand");
  if (static_cast<int>(s.size()) != x.rank()) fail(ErrorCode::Shape, "expand: rank mismatch");
  for (int i = 0; i < x.rank(); ++i) {
    if (x.dim(i) != s[static_cast<size_t>(i)] && x.dim(i) != 1) {
      fail(ErrorCode::Shape, "expand: cannot expand " + shape_str(x.shape) + " to " + shape_str(s));
    }
  }
  TensorT<T> y = TensorT<T>::zeros(s);
  auto sx = broadcast_strides(x.shape, s);
  const T* xp = x.ptr();
  T* yp = y.ptr();
  const int rank = static_cast<int>(s.size());
  std::vector<int> idx(static_cast<size_t>(rank), 0);
  const int64_t total = shape_numel(s);
  for (int64_t flat = 0; flat < total; ++flat) {
    int64_t o = 0;
    for (int i = 0; i < rank; ++i) o += sx[static_cast<size_t>(i)] * idx[static_cast<size_t>(i)];
    yp[flat] = xp[o];
    for (int i = rank - 1; i >= 0; --i) {
      if (++idx[static_cast<size_t>(i)] < s[static_cast<size_t>(i)]) break;
      idx[static_cast<size_t>(i)] = 0;
    }
  }
  if (x.on_tape()) {
    int xn = x.node;
    y.tape = x.tape;
    y.node = x.tape->push(s, {xn}, [xn, sx, s](TapeT<T>& tp, int self) {
      const auto& up = tp.grad(self);
      auto& gx = tp.grad(xn);
      const int rank = static_cast<int>(s.size());
      std::vector<int> idx(static_cast<size_t>(rank), 0);
      const int64_t total = shape_numel(s);
      for (int64_t flat = 0; flat < total; ++flat) {
        int64_t o = 0;
        for (int i = 0; i < rank; ++i) o += sx[static_cast<size_t>(i)] * idx[static_cast<size_t>(i)];
        gx[static_cast<size_t>(o)] += up[static_cast<size_t>(flat)];
        for (int i = rank - 1; i >= 0; --i) {
          if (++idx[static_cast<size_t>(i)] < s[static_cast<size_t>(i)]) break;
          idx[static_cast<size_t>(i)] = 0;
        }
      }
    });
  }
  return y;
}

// ---- concat / slice ----------------------------------------------------------

template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, int axis) {
  if (parts.empty()) fail(ErrorCode::InvalidArgument, "concat: no inputs");
  const int rank = parts[0].rank();
  if (axis < 0 || axis >= rank) fail(ErrorCode::Shape, "concat: axis out of range");
  Shape os = parts[0].shape;
  int total_axis = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) fail(ErrorCode::Shape, "concat: rank mismatch");
    for (int i = 0; i < rank; ++i) {
      if (i != axis && p.dim(i) != os[static_cast<size_t>(i)]) {
        fail(ErrorCode::Shape, "concat: shape mismatch on non-concat axis");
      }
    }
    total_axis += p.dim(axis);
  }
  os[static_cast<size_t>(axis)] = total_axis;

  // views as [outer, axis, inner]
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= os[static_cast<size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) inner *= os[static_cast<size_t>(i)];

  TensorT<T> y = TensorT<T>::zeros(os);
  T* yp = y.ptr();
  int64_t axis_off = 0;
  for (const auto& p : parts) {
    const int64_t pa = p.dim(axis);
    const T* pp = p.ptr();
    for (int64_t o = 0; o < outer; ++o) {
      std::memcpy(yp + (o * total_axis + axis_off) * inner, pp + o * pa * inner,
                  static_cast<size_t>(pa * inner) * sizeof(T));
    }
    axis_off += pa;
  }

  TapeT<T>* tape = nullptr;
  for (const auto& p : parts) {
    if (p.on_tape()) {
      if (tape && tape != p.tape) fail(ErrorCode::InvalidArgument, "concat: inputs on different tapes");
      tape = p.tape;
    }
  }
  if (tape) {
    struct Piece {
      int node;
      int64_t axis_off;
      int64_t axis_len;
    };
    std::vector<Piece> pieces;
    std::vector<int> ins;
    int64_t off = 0;
    for (const auto& p : parts) {
      if (p.on_tape()) {
        pieces.push_back({p.node, off, p.dim(axis)});
        ins.push_back(p.node);
      }
      off += p.dim(axis);
    }
    const int64_t ta = total_axis;
    y.tape = tape;
    y.node = tape->push(os, ins, [pieces, outer, inner, ta](TapeT<T>& tp, int self) {
      const auto& up = tp.grad(self);
      for (const auto& pc : pieces) {
        auto& g = tp.grad(pc.node);
        for (int64_t o = 0; o < outer; ++o) {
          const T* src = up.data() + (o * ta + pc.axis_off) * inner;
          T* dst = g.data() + o * pc.axis_len * inner;
          for (int64_t i = 0; i < pc.axis_len * inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return y;
}

template <typename T>
TensorT<T> slice(const TensorT<T>& x, int axis, int start, int len) {
  if (axis < 0 || axis >= x.rank()) fail(ErrorCode::Shape, "slice: axis out of range");
  if (start < 0 || len < 1 || start + len > x.dim(axis)) fail(ErrorCode::Shape, "slice: range out of bounds");
  Shape os = x.shape;
  os[static_cast<size_t>(axis)] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const int64_t xa = x.dim(axis);

  TensorT<T> y = TensorT<T>::zeros(os);
  const T* xp = x.ptr();
  T* yp = y.ptr();
  for (int64_t o = 0; o < outer; ++o) {
    std::memcpy(yp + o * len * inner, xp + (o * xa + start) * inner,
                static_cast<size_t>(len * inner) * sizeof(T));
  }
  if (x.on_tape()) {
    int xn = x.node;
    y.tape = x.tape;
    y.node = x.tape->push(os, {xn}, [xn, outer, inner, xa, start, len](TapeT<T>& tp, int self) {
      const auto& up = tp.grad(self);
      auto& gx = tp.grad(xn);
      for (int64_t o = 0; o < outer; ++o) {
        const T* src = up.data() + o * len * inner;
        T* dst = gx.data() + (o * xa + start) * inner;
        for (int64_t i = 0; i < static_cast<int64_t>(len) * inner; ++i) dst[i] += src[i];
      }
    });
  }
  return y;
}

// ---- group_norm (composite) ---------------------------------------------------

template <typename T>
TensorT<T> group_norm(const TensorT<T>& x, int num_groups, const TensorT<T>& gamma,
                      const TensorT<T>& beta, T eps) {
  if (x.rank() != 4) fail(ErrorCode::Shape, "group_norm: expected rank-4 input");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (num_groups < 1 || C % num_groups != 0) {
    fail(ErrorCode::Shape, "group_norm: channels " + std::to_string(C) + " not divisible by groups " +
                               std::to_string(num_groups));
  }
  if (gamma.rank() != 1 || gamma.dim(0) != C || beta.rank() != 1 || beta.dim(0) != C) {
    fail(ErrorCode::Shape, "group_norm: gamma/beta must be [C]");
  }
  const int cg = C / num_groups;
  TensorT<T> xg = reshape(x, {B, num_groups, cg, H, W});
  TensorT<T> m = reduce_mean(xg, {2, 3, 4}, true);
  TensorT<T> xc = sub(xg, expand(m, xg.shape));
  TensorT<T> var = reduce_mean(mul(xc, xc), {2, 3, 4}, true);
  TensorT<T> denom = sqrt_op(affine(var, T(1), eps));
  TensorT<T> xn = div(xc, expand(denom, xg.shape));
  TensorT<T> flat = reshape(xn, {B, C, H, W});
  TensorT<T> g4 = reshape(gamma, {1, C, 1, 1});
  TensorT<T> b4 = reshape(beta, {1, C, 1, 1});
  return add(mul(flat, g4), b4);
}

// ---- bilinear resize ------------------------------------------------------------

template <typename T>
TensorT<T> bilinear_resize(const TensorT<T>& x, int oh, int ow) {
  check_finite(x, "bilinear_resize");
  if (x.rank() != 4) fail(ErrorCode::Shape, "bilinear_resize: expected rank-4 input");
  if (oh < 1 || ow < 1) fail(ErrorCode::Shape, "bilinear_resize: bad output size");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);

  struct Tap {
    int i0, i1;
    T w0, w1;
  };
  auto make_taps = [](int in, int out) {
    std::vector<Tap> taps(static_cast<size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double src = (o + 0.5) * scale - 0.5;
      if (src < 0.0) src = 0.0;
      if (src > in - 1) src = in - 1;
      int i0 = static_cast<int>(std::floor(src));
      int i1 = std::min(i0 + 1, in - 1);
      const double w1 = src - i0;
      taps[static_cast<size_t>(o)] = {i0, i1, static_cast<T>(1.0 - w1), static_cast<T>(w1)};
    }
    return taps;
  };
  auto ty = make_taps(H, oh);
  auto tx = make_taps(W, ow);

  TensorT<T> y = TensorT<T>::zeros({B, C, oh, ow});
  const T* xp = x.ptr();
  T* yp = y.ptr();
  for (int64_t plane = 0; plane < static_cast<int64_t>(B) * C; ++plane) {
    const T* in = xp + plane * H * W;
    T* out = yp + plane * static_cast<int64_t>(oh) * ow;
    for (int oy = 0; oy < oh; ++oy) {
      const Tap& tyo = ty[static_cast<size_t>(oy)];
      const T* r0 = in + static_cast<int64_t>(tyo.i0) * W;
      const T* r1 = in + static_cast<int64_t>(tyo.i1) * W;
      T* orow = out + static_cast<int64_t>(oy) * ow;
      for (int ox = 0; ox < ow; ++ox) {
        const Tap& txo = tx[static_cast<size_t>(ox)];
        orow[ox] = tyo.w0 * (txo.w0 * r0[txo.i0] + txo.w1 * r0[txo.i1]) +
                   tyo.w1 * (txo.w0 * r1[txo.i0] + txo.w1 * r1[txo.i1]);
      }
    }
  }

  if (x.on_tape()) {
    int xn = x.node;
    y.tape = x.tape;
    y.node = x.tape->push(y.shape, {xn}, [xn, ty, tx, B, C, H, W, oh, ow](TapeT<T>& tp, int self) {
      const auto& up = tp.grad(self);
      auto& gx = tp.grad(xn);
      for (int64_t plane = 0; plane < static_cast<int64_t>(B) * C; ++plane) {
        const T* urow_base = up.data() + plane * static_cast<int64_t>(oh) * ow;
        T* g = gx.data() + plane * H * W;
        for (int oy = 0; oy < oh; ++oy) {
          const Tap& tyo = ty[static_cast<size_t>(oy)];
          const T* urow = urow_base + static_cast<int64_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const Tap& txo = tx[static_cast<size_t>(ox)];
            const T u = urow[ox];
            g[tyo.i0 * W + txo.i0] += u * tyo.w0 * txo.w0;
            g[tyo.i0 * W + txo.i1] += u * tyo.w0 * txo.w1;
            g[tyo.i1 * W + txo.i0] += u * tyo.w1 * txo.w0;
            g[tyo.i1 * W + txo.i1] += u * tyo.w1 * txo.w1;
          }
        }
      }
    });
  }
  return y;
}

// ---- finite differences -----------------------------------------------------------

template <typename T>
TensorT<T> finite_diff_gradient(const std::function<T(const TensorT<T>&)>& f,
                                const TensorT<T>& x, T eps) {
  if (!(eps > T(0))) fail(ErrorCode::InvalidArgument, "finite_diff: eps must be positive");
  TensorT<T> g = TensorT<T>::zeros(x.shape);
  TensorT<T> probe = x.value_copy();
  T* pp = probe.ptr();
  T* gp = g.ptr();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    const T orig = pp[i];
    pp[i] = orig + eps;
    const T fp = f(probe);
    pp[i] = orig - eps;
    const T fm = f(probe);
    pp[i] = orig;
    if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm))) {
      fail(ErrorCode::Numeric, "finite_diff: non-finite probe at flat index " + std::to_string(i));
    }
    gp[i] = (fp - fm) / (T(2) * eps);
  }
  return g;
}

template <typename T>
T max_rel_err(const TensorT<T>& a, const TensorT<T>& f, T floor_) {
  if (!same_shape(a.shape, f.shape)) fail(ErrorCode::Shape, "max_rel_err: shape mismatch");
  T worst = T(0);
  const T* ap = a.ptr();
  const T* fp = f.ptr();
  for (int64_t i = 0; i < a.numel(); ++i) {
    const T denom = std::max(std::max(std::abs(ap[i]), std::abs(fp[i])), floor_);
    worst = std::max(worst, std::abs(ap[i] - fp[i]) / denom);
  }
  return worst;
}

// ---- instantiations -----------------------------------------------------------

#define TAUFLOW_INSTANTIATE_OPS(T)                                                               \
  template struct TensorT<T>;                                                                    \
  template class TapeT<T>;                                                                       \
  template void check_finite<T>(const TensorT<T>&, const char*);                                 \
  template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, int,    \
                                int, int);                                                       \
  template TensorT<T> linear<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&);        \
  template TensorT<T> sigmoid<T>(const TensorT<T>&);                                             \
  template TensorT<T> tanh_op<T>(const TensorT<T>&);                                             \
  template TensorT<T> relu<T>(const TensorT<T>&);                                                \
  template TensorT<T> softplus<T>(const TensorT<T>&);                                            \
  template TensorT<T> exp_op<T>(const TensorT<T>&);                                              \
  template TensorT<T> log_op<T>(const TensorT<T>&);                                              \
  template TensorT<T> sqrt_op<T>(const TensorT<T>&);                                             \
  template TensorT<T> abs_op<T>(const TensorT<T>&);                                              \
  template TensorT<T> affine<T>(const TensorT<T>&, T, T);                                        \
  template TensorT<T> clamp<T>(const TensorT<T>&, T, T);                                         \
  template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&);                              \
  template TensorT<T> sub<T>(const TensorT<T>&, const TensorT<T>&);                              \
  template TensorT<T> mul<T>(const TensorT<T>&, const TensorT<T>&);                              \
  template TensorT<T> div<T>(const TensorT<T>&, const TensorT<T>&);                              \
  template TensorT<T> softmax_axis<T>(const TensorT<T>&, int);                                   \
  template TensorT<T> softmax_axis<T>(const TensorT<T>&, int, const TensorT<T>&);                \
  template TensorT<T> reduce_mean<T>(const TensorT<T>&, const std::vector<int>&, bool);          \
  template TensorT<T> reduce_sum<T>(const TensorT<T>&, const std::vector<int>&, bool);           \
  template TensorT<T> reshape<T>(const TensorT<T>&, const Shape&);                               \
  template TensorT<T> expand<T>(const TensorT<T>&, const Shape&);                                \
  template TensorT<T> concat<T>(const std::vector<TensorT<T>>&, int);                            \
  template TensorT<T> slice<T>(const TensorT<T>&, int, int, int);                                \
  template TensorT<T> group_norm<T>(const TensorT<T>&, int, const TensorT<T>&, const TensorT<T>&, \
                                    T);                                                          \
  template TensorT<T> bilinear_resize<T>(const TensorT<T>&, int, int);                           \
  template TensorT<T> finite_diff_gradient<T>(const std::function<T(const TensorT<T>&)>&,        \
                                              const TensorT<T>&, T);                             \
  template T max_rel_err<T>(const TensorT<T>&, const TensorT<T>&, T);

TAUFLOW_INSTANTIATE_OPS(float)
TAUFLOW_INSTANTIATE_OPS(double)

#undef TAUFLOW_INSTANTIATE_OPS

}  // namespace tauflow
