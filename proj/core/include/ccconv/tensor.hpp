#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ccconv/constants.hpp"
#include "ccconv/errors.hpp"
#include "ccconv/memtrack.hpp"
#include "ccconv/rng.hpp"

namespace ccconv {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

namespace detail {

template <typename T>
struct Storage {
  Shape shape;
  std::vector<T> data;
  std::optional<std::vector<T>> grad;
  bool requires_grad = false;

  explicit Storage(Shape s, bool rg) : shape(std::move(s)), requires_grad(rg) {
    data.resize(static_cast<std::size_t>(shape_numel(shape)));
    memtrack::add(data.size() * sizeof(T));
  }
  Storage(Shape s, std::vector<T> d, bool rg)
      : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
    memtrack::add(data.size() * sizeof(T));
  }
  ~Storage() {
    memtrack::sub(data.size() * sizeof(T));
    if (grad) memtrack::sub(grad->size() * sizeof(T));
  }
  Storage(const Storage&) = delete;
  Storage& operator=(const Storage&) = delete;

  void ensure_grad() {
    if (!grad) {
      grad.emplace(data.size(), T(0));
      memtrack::add(data.size() * sizeof(T));
    }
  }
  void drop_grad() {
    if (grad) {
      memtrack::sub(grad->size() * sizeof(T));
      grad.reset();
    }
  }
};

}  // namespace detail

// Dense row-major float tensor. Data is immutable once an op has consumed
// the tensor; builders fill a fresh buffer via data_mut() before use.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::make_shared<detail::Storage<T>>(std::move(shape), requires_grad));
  }
  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.store_->data.begin(), t.store_->data.end(), value);
    return t;
  }
  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
      throw ShapeError("from_data: shape " + shape_str(shape) + " does not match buffer of " +
                       std::to_string(data.size()) + " elements");
    return Tensor(std::make_shared<detail::Storage<T>>(std::move(shape), std::move(data),
                                                       requires_grad));
  }
  static Tensor randn(Shape shape, Rng& rng, T sd = T(1), bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.store_->data) v = static_cast<T>(rng.normal(0.0, static_cast<double>(sd)));
    return t;
  }
  static Tensor uniform(Shape shape, Rng& rng, T lo, T hi, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.store_->data)
      v = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
    return t;
  }

  bool defined() const { return store_ != nullptr; }
  const Shape& shape() const { return store_->shape; }
  std::int64_t numel() const { return static_cast<std::int64_t>(store_->data.size()); }
  std::size_t ndim() const { return store_->shape.size(); }
  std::int64_t dim(std::size_t i) const { return store_->shape[i]; }

  std::span<const T> data() const { return store_->data; }
  // Only for filling freshly created tensors.
  std::span<T> data_mut() { return store_->data; }

  bool requires_grad() const { return store_ && store_->requires_grad; }
  void set_requires_grad(bool rg) { store_->requires_grad = rg; }

  bool has_grad() const { return store_ && store_->grad.has_value(); }
  std::span<const T> grad() const {
    if (!has_grad()) throw TapeError("grad(): no gradient recorded for this tensor");
    return *store_->grad;
  }
  std::span<T> grad_mut() {
    store_->ensure_grad();
    return *store_->grad;
  }
  void clear_grad() {
    if (store_) store_->drop_grad();
  }

  T at(std::initializer_list<std::int64_t> idx) const {
    std::int64_t off = 0;
    std::size_t i = 0;
    for (auto v : idx) {
      off = off * store_->shape[i] + v;
      ++i;
    }
    return store_->data[static_cast<std::size_t>(off)];
  }

  // Identity of the underlying buffer; used by the tape.
  const void* id() const { return store_.get(); }

  std::shared_ptr<detail::Storage<T>> store() const { return store_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Storage<T>> s) : store_(std::move(s)) {}
  std::shared_ptr<detail::Storage<T>> store_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

// Ordered record of op nodes. Backward replays the closures in reverse
// push order; grads of every participating tensor are cleared first, so
// repeated backward passes are bitwise identical. Single-owner,
// single-threaded.
template <typename T>
class GradTape {
 public:
  struct Node {
    const char* op;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    std::function<void()> backward;
  };

  void push(Node node) { nodes_.push_back(std::move(node)); }

  std::size_t size() const { return nodes_.size(); }

  bool contains(const Tensor<T>& t) const {
    for (const auto& n : nodes_)
      if (n.output.id() == t.id()) return true;
    return false;
  }

  void backward(Tensor<T> root, const Tensor<T>& seed) {
    if (!contains(root)) throw TapeError("backward: root tensor was not produced on this tape");
    if (seed.shape() != root.shape())
      throw ShapeError("backward: seed shape " + shape_str(seed.shape()) +
                       " does not match root shape " + shape_str(root.shape()));
    clear_grads();
    auto g = root.grad_mut();
    auto s = seed.data();
    std::copy(s.begin(), s.end(), g.begin());
    replay();
  }

  void backward(Tensor<T> root) {
    if (!contains(root)) throw TapeError("backward: root tensor was not produced on this tape");
    clear_grads();
    auto g = root.grad_mut();
    std::fill(g.begin(), g.end(), T(1));
    replay();
  }

  // For callers that manage seeding/clearing themselves (chunk recompute).
  void replay() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!it->output.has_grad()) continue;
      it->backward();
    }
  }

  void clear_grads() {
    for (auto& n : nodes_) {
      n.output.clear_grad();
      for (auto& in : n.inputs) in.clear_grad();
    }
  }

 private:
  std::vector<Node> nodes_;
};

template <typename T>
void validate_finite(const Tensor<T>& t, const std::string& what) {
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(static_cast<double>(d[i])))
      throw NumericError(what + ": non-finite value " + std::to_string(static_cast<double>(d[i])) +
                         " at flat index " + std::to_string(i));
  }
}

// ---------------------------------------------------------------------------
// broadcasting helpers (trailing-dim rule, singleton expansion only)

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  std::size_t n = std::max(a.size(), b.size());
  Shape out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::int64_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
    std::int64_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Row-major strides, 0 on broadcast (singleton) dims, aligned to out rank.
inline std::vector<std::int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::int64_t> strides(out.size(), 0);
  std::int64_t acc = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    std::size_t oi = i + (out.size() - in.size());
    strides[oi] = (in[i] == 1 && out[oi] != 1) ? 0 : acc;
    acc *= in[i];
  }
  return strides;
}

// Walks every output index of `out_shape` carrying flat offsets for two
// operands. F(flat_out, off_a, off_b).
template <typename F>
void for_each_broadcast(const Shape& out_shape, const std::vector<std::int64_t>& sa,
                        const std::vector<std::int64_t>& sb, F&& f) {
  std::int64_t total = shape_numel(out_shape);
  std::size_t rank = out_shape.size();
  if (rank == 0) {
    if (total == 1) f(0, 0, 0);
    return;
  }
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t off_a = 0, off_b = 0;
  for (std::int64_t flat = 0; flat < total; ++flat) {
    f(flat, off_a, off_b);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      off_a += sa[d];
      off_b += sb[d];
      if (idx[d] < out_shape[d]) break;
      off_a -= sa[d] * out_shape[d];
      off_b -= sb[d] * out_shape[d];
      idx[d] = 0;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops

namespace detail {

template <typename T, typename Fwd, typename Bwd>
Tensor<T> binary_op(const char* name, const Tensor<T>& a, const Tensor<T>& b, GradTape<T>* tape,
                    Fwd fwd, Bwd bwd) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  auto sa = broadcast_strides(a.shape(), out_shape);
  auto sb = broadcast_strides(b.shape(), out_shape);
  bool rg = tape && (a.requires_grad() || b.requires_grad());
  Tensor<T> out = Tensor<T>::zeros(out_shape, rg);
  {
    auto pa = a.data();
    auto pb = b.data();
    auto po = out.data_mut();
    for_each_broadcast(out_shape, sa, sb, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
      po[o] = fwd(pa[ia], pb[ib]);
    });
  }
  if (rg) {
    tape->push({name,
                {a, b},
                out,
                [a = a, b = b, out = out, out_shape, sa, sb, bwd]() mutable {
                  auto go = out.grad();
                  auto pa = a.data();
                  auto pb = b.data();
                  std::span<T> ga, gb;
                  if (a.requires_grad()) ga = a.grad_mut();
                  if (b.requires_grad()) gb = b.grad_mut();
                  for_each_broadcast(
                      out_shape, sa, sb, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                        auto [da, db] = bwd(pa[ia], pb[ib], go[o]);
                        if (!ga.empty()) ga[ia] += da;
                        if (!gb.empty()) gb[ib] += db;
                      });
                }});
  }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, GradTape<T>* tape = nullptr) {
  return detail::binary_op<T>(
      "add", a, b, tape, [](T x, T y) { return x + y; },
      [](T, T, T g) { return std::pair<T, T>(g, g); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b, GradTape<T>* tape = nullptr) {
  return detail::binary_op<T>(
      "sub", a, b, tape, [](T x, T y) { return x - y; },
      [](T, T, T g) { return std::pair<T, T>(g, -g); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, GradTape<T>* tape = nullptr) {
  return detail::binary_op<T>(
      "mul", a, b, tape, [](T x, T y) { return x * y; },
      [](T x, T y, T g) { return std::pair<T, T>(g * y, g * x); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope = static_cast<T>(constants::kLeakySlope),
                     GradTape<T>* tape = nullptr) {
  bool rg = tape && a.requires_grad();
  Tensor<T> out = Tensor<T>::zeros(a.shape(), rg);
  {
    auto pa = a.data();
    auto po = out.data_mut();
    for (std::size_t i = 0; i < pa.size(); ++i) po[i] = pa[i] > T(0) ? pa[i] : slope * pa[i];
  }
  if (rg) {
    tape->push({"leaky_relu",
                {a},
                out,
                [a = a, out = out, slope]() mutable {
                  auto go = out.grad();
                  auto pa = a.data();
                  auto ga = a.grad_mut();
                  for (std::size_t i = 0; i < pa.size(); ++i)
                    ga[i] += go[i] * (pa[i] > T(0) ? T(1) : slope);
                }});
  }
  return out;
}

// ---------------------------------------------------------------------------
// gather: copies K neighbor pixels per output location.
// indices layout [K,2,Ho,Wo] (axis 0 = row index, axis 1 = col index),
// already resolved in-range. Output [N,1,C,K,Ho,Wo].

template <typename T>
Tensor<T> gather_neighbors(const Tensor<T>& input, std::span<const std::int32_t> indices,
                           std::int64_t k_count, std::int64_t out_h, std::int64_t out_w,
                           GradTape<T>* tape = nullptr) {
  if (input.ndim() != 4)
    throw ShapeError("gather_neighbors: input must be [N,C,H,W], got " + shape_str(input.shape()));
  const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::int64_t plane = out_h * out_w;
  if (static_cast<std::int64_t>(indices.size()) != k_count * 2 * plane)
    throw ShapeError("gather_neighbors: index buffer size mismatch");

  bool rg = tape && input.requires_grad();
  Tensor<T> out = Tensor<T>::zeros({n, 1, c, k_count, out_h, out_w}, rg);
  std::vector<std::int64_t> src(static_cast<std::size_t>(k_count * plane));
  for (std::int64_t k = 0; k < k_count; ++k) {
    const std::int32_t* ri = indices.data() + (k * 2 + 0) * plane;
    const std::int32_t* ci = indices.data() + (k * 2 + 1) * plane;
    for (std::int64_t p = 0; p < plane; ++p) {
      std::int64_t r = ri[p], cc = ci[p];
      if (r < 0 || r >= h || cc < 0 || cc >= w)
        throw Error("gather_neighbors: internal invariant violated, index (" + std::to_string(r) +
                    "," + std::to_string(cc) + ") outside " + std::to_string(h) + "x" +
                    std::to_string(w));
      src[static_cast<std::size_t>(k * plane + p)] = r * w + cc;
    }
  }
  {
    auto pi = input.data();
    auto po = out.data_mut();
    for (std::int64_t bn = 0; bn < n; ++bn)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const T* in_plane = pi.data() + (bn * c + ch) * h * w;
        T* out_base = po.data() + ((bn * c + ch) * k_count) * plane;
        for (std::int64_t k = 0; k < k_count; ++k) {
          const std::int64_t* s = src.data() + k * plane;
          T* o = out_base + k * plane;
          for (std::int64_t p = 0; p < plane; ++p) o[p] = in_plane[s[p]];
        }
      }
  }
  if (rg) {
    tape->push({"gather_neighbors",
                {input},
                out,
                [input = input, out = out, src = std::move(src), n, c, h, w, k_count, plane]() mutable {
                  auto go = out.grad();
                  auto gi = input.grad_mut();
                  for (std::int64_t bn = 0; bn < n; ++bn)
                    for (std::int64_t ch = 0; ch < c; ++ch) {
                      T* in_plane = gi.data() + (bn * c + ch) * h * w;
                      const T* out_base = go.data() + ((bn * c + ch) * k_count) * plane;
                      for (std::int64_t k = 0; k < k_count; ++k) {
                        const std::int64_t* s = src.data() + k * plane;
                        const T* o = out_base + k * plane;
                        for (std::int64_t p = 0; p < plane; ++p) in_plane[s[p]] += o[p];
                      }
                    }
                }});
  }
  return out;
}

// ---------------------------------------------------------------------------
// 1x1 convolution: per-pixel affine map over channels.
// input [B,Cin,H,W], weight [Cout,Cin], bias [Cout] -> [B,Cout,H,W]

template <typename T>
Tensor<T> conv1x1(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                  GradTape<T>* tape = nullptr) {
  if (input.ndim() != 4)
    throw ShapeError("conv1x1: input must be [B,C,H,W], got " + shape_str(input.shape()));
  if (weight.ndim() != 2)
    throw ShapeError("conv1x1: weight must be [Cout,Cin], got " + shape_str(weight.shape()));
  const std::int64_t b = input.dim(0), cin = input.dim(1);
  const std::int64_t plane = input.dim(2) * input.dim(3);
  const std::int64_t cout = weight.dim(0);
  if (weight.dim(1) != cin)
    throw ShapeError("conv1x1: weight " + shape_str(weight.shape()) + " does not accept input " +
                     shape_str(input.shape()));
  if (bias.numel() != cout)
    throw ShapeError("conv1x1: bias " + shape_str(bias.shape()) + " vs Cout=" +
                     std::to_string(cout));

  bool rg = tape && (input.requires_grad() || weight.requires_grad() || bias.requires_grad());
  Tensor<T> out = Tensor<T>::zeros({b, cout, input.dim(2), input.dim(3)}, rg);
  {
    auto pi = input.data();
    auto pw = weight.data();
    auto pb = bias.data();
    auto po = out.data_mut();
    for (std::int64_t bn = 0; bn < b; ++bn)
      for (std::int64_t co = 0; co < cout; ++co) {
        T* o = po.data() + (bn * cout + co) * plane;
        std::fill(o, o + plane, pb[co]);
        for (std::int64_t ci = 0; ci < cin; ++ci) {
          T wv = pw[co * cin + ci];
          const T* in = pi.data() + (bn * cin + ci) * plane;
          for (std::int64_t p = 0; p < plane; ++p) o[p] += wv * in[p];
        }
      }
  }
  if (rg) {
    tape->push({"conv1x1",
                {input, weight, bias},
                out,
                [input = input, weight = weight, bias = bias, out = out, b, cin, cout, plane]() mutable {
                  auto go = out.grad();
                  auto pi = input.data();
                  auto pw = weight.data();
                  if (input.requires_grad()) {
                    auto gi = input.grad_mut();
                    for (std::int64_t bn = 0; bn < b; ++bn)
                      for (std::int64_t ci = 0; ci < cin; ++ci) {
                        T* g = gi.data() + (bn * cin + ci) * plane;
                        for (std::int64_t co = 0; co < cout; ++co) {
                          T wv = pw[co * cin + ci];
                          const T* og = go.data() + (bn * cout + co) * plane;
                          for (std::int64_t p = 0; p < plane; ++p) g[p] += wv * og[p];
                        }
                      }
                  }
                  if (weight.requires_grad()) {
                    auto gw = weight.grad_mut();
                    for (std::int64_t co = 0; co < cout; ++co)
                      for (std::int64_t ci = 0; ci < cin; ++ci) {
                        T acc = 0;
                        for (std::int64_t bn = 0; bn < b; ++bn) {
                          const T* og = go.data() + (bn * cout + co) * plane;
                          const T* in = pi.data() + (bn * cin + ci) * plane;
                          for (std::int64_t p = 0; p < plane; ++p) acc += og[p] * in[p];
                        }
                        gw[co * cin + ci] += acc;
                      }
                  }
                  if (bias.requires_grad()) {
                    auto gb = bias.grad_mut();
                    for (std::int64_t co = 0; co < cout; ++co) {
                      T acc = 0;
                      for (std::int64_t bn = 0; bn < b; ++bn) {
                        const T* og = go.data() + (bn * cout + co) * plane;
                        for (std::int64_t p = 0; p < plane; ++p) acc += og[p];
                      }
                      gb[co] += acc;
                    }
                  }
                }});
  }
  return out;
}

// ---------------------------------------------------------------------------
// contraction: broadcast-multiply neighbors with weights and sum over the
// Cin and K axes. Summation order per output value is fixed: cin outer,
// k inner, ascending.
// neighbors [N,1,Cin,K,H,W] x weights [1,Cout,Cin,K,H,W] -> [N,Cout,H,W]

template <typename T>
Tensor<T> contract_weights(const Tensor<T>& neighbors, const Tensor<T>& weights,
                           GradTape<T>* tape = nullptr) {
  if (neighbors.ndim() != 6 || weights.ndim() != 6)
    throw ShapeError("contract_weights: expected rank-6 operands, got " +
                     shape_str(neighbors.shape()) + " and " + shape_str(weights.shape()));
  const std::int64_t n = neighbors.dim(0), cin = neighbors.dim(2), k = neighbors.dim(3);
  const std::int64_t h = neighbors.dim(4), w = neighbors.dim(5);
  const std::int64_t cout = weights.dim(1);
  if (neighbors.dim(1) != 1 || weights.dim(0) != 1 || weights.dim(2) != cin ||
      weights.dim(3) != k || weights.dim(4) != h || weights.dim(5) != w)
    throw ShapeError("contract_weights: mismatched operands " + shape_str(neighbors.shape()) +
                     " and " + shape_str(weights.shape()));

  const std::int64_t plane = h * w;
  bool rg = tape && (neighbors.requires_grad() || weights.requires_grad());
  Tensor<T> out = Tensor<T>::zeros({n, cout, h, w}, rg);
  {
    auto pn = neighbors.data();
    auto pw = weights.data();
    auto po = out.data_mut();
    for (std::int64_t bn = 0; bn < n; ++bn)
      for (std::int64_t co = 0; co < cout; ++co) {
        T* o = po.data() + (bn * cout + co) * plane;
        for (std::int64_t ci = 0; ci < cin; ++ci)
          for (std::int64_t kk = 0; kk < k; ++kk) {
            const T* a = pn.data() + ((bn * cin + ci) * k + kk) * plane;
            const T* b = pw.data() + ((co * cin + ci) * k + kk) * plane;
            for (std::int64_t p = 0; p < plane; ++p) o[p] += a[p] * b[p];
          }
      }
  }
  if (rg) {
    tape->push({"contract_weights",
                {neighbors, weights},
                out,
                [neighbors = neighbors, weights = weights, out = out, n, cin, cout, k, plane]() mutable {
                  auto go = out.grad();
                  auto pn = neighbors.data();
                  auto pw = weights.data();
                  if (neighbors.requires_grad()) {
                    auto gn = neighbors.grad_mut();
                    for (std::int64_t bn = 0; bn < n; ++bn)
                      for (std::int64_t co = 0; co < cout; ++co) {
                        const T* og = go.data() + (bn * cout + co) * plane;
                        for (std::int64_t ci = 0; ci < cin; ++ci)
                          for (std::int64_t kk = 0; kk < k; ++kk) {
                            T* g = gn.data() + ((bn * cin + ci) * k + kk) * plane;
                            const T* b = pw.data() + ((co * cin + ci) * k + kk) * plane;
                            for (std::int64_t p = 0; p < plane; ++p) g[p] += og[p] * b[p];
                          }
                      }
                  }
                  if (weights.requires_grad()) {
                    auto gw = weights.grad_mut();
                    for (std::int64_t bn = 0; bn < n; ++bn)
                      for (std::int64_t co = 0; co < cout; ++co) {
                        const T* og = go.data() + (bn * cout + co) * plane;
                        for (std::int64_t ci = 0; ci < cin; ++ci)
                          for (std::int64_t kk = 0; kk < k; ++kk) {
                            T* g = gw.data() + ((co * cin + ci) * k + kk) * plane;
                            const T* a = pn.data() + ((bn * cin + ci) * k + kk) * plane;
                            for (std::int64_t p = 0; p < plane; ++p) g[p] += og[p] * a[p];
                          }
                      }
                  }
                }});
  }
  return out;
}

}  // namespace ccconv
