#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dmd {

using Shape = std::vector<std::size_t>;

struct TensorError : std::runtime_error {
  explicit TensorError(const std::string& what) : std::runtime_error(what) {}
};

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

class Tensor;
void backward(const Tensor& loss);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized on demand
  bool requires_grad = false;          // leaves: accumulate on backward
  bool in_graph = false;               // non-leaves: participates in autodiff
  bool frozen = false;                 // excluded from accumulation until the tape resets
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // pushes this->grad into parents

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Per-run recording of op outputs in creation order; creation order is a
// topological order because every op's inputs already exist.
struct Tape {
  std::vector<std::shared_ptr<Node>> ops;
  std::vector<std::shared_ptr<Node>> frozen;

  static Tape& active() {
    thread_local Tape t;
    return t;
  }

  void reset() {
    ops.clear();
    for (auto& n : frozen) n->frozen = false;
    frozen.clear();
  }
};

// True when gradient work for this node is needed during backward.
inline bool needs_grad(const Node& n) {
  return (n.requires_grad || n.in_graph) && !n.frozen;
}

inline void accumulate(Node& p, std::size_t idx, double v) {
  p.ensure_grad();
  p.grad[idx] += v;
}

}  // namespace detail

// Dense row-major tensor of doubles with an optional reverse-mode tape
// handle. Value-like: copying copies the handle (shared buffer); use
// detached()/clone for independent storage.
class Tensor {
 public:
  Tensor() : n_(std::make_shared<detail::Node>()) {}

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : n_(std::make_shared<detail::Node>()) {
    if (numel(shape) != data.size())
      throw TensorError("shape " + shape_str(shape) + " does not match data length " +
                        std::to_string(data.size()));
    n_->shape = std::move(shape);
    n_->value = std::move(data);
    n_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> d(numel(shape), 0.0);
    return Tensor(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    std::vector<double> d(numel(shape), v);
    return Tensor(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<double>{v}, requires_grad);
  }

  const Shape& shape() const { return n_->shape; }
  std::size_t size() const { return n_->value.size(); }
  std::size_t dim(std::size_t i) const { return n_->shape.at(i); }
  std::size_t ndim() const { return n_->shape.size(); }

  const std::vector<double>& data() const { return n_->value; }
  std::vector<double>& data_mut() { return n_->value; }
  double item() const {
    if (size() != 1) throw TensorError("item() on non-scalar tensor " + shape_str(shape()));
    return n_->value[0];
  }
  double at(std::size_t i) const { return n_->value.at(i); }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }
  bool has_grad() const { return n_->grad.size() == n_->value.size(); }
  const std::vector<double>& grad() const {
    if (!has_grad()) throw TensorError("gradient not populated");
    return n_->grad;
  }
  void zero_grad() { n_->grad.assign(n_->value.size(), 0.0); }
  void drop_grad() { n_->grad.clear(); }

  // Same values, no tape participation.
  Tensor detached() const { return Tensor(n_->shape, n_->value, false); }

  std::shared_ptr<detail::Node> node() const { return n_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : n_(std::move(n)) {}
  std::shared_ptr<detail::Node> n_;

  friend Tensor make_op(Shape shape, std::vector<double> value,
                        std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backprop);
};

// Central op constructor: records on the tape iff any parent participates.
inline Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                      std::function<void(detail::Node&)> backprop) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool track = false;
  for (const auto& p : parents)
    if (p.node()->requires_grad || p.node()->in_graph) track = true;
  if (track) {
    n->in_graph = true;
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backprop = std::move(backprop);
    detail::Tape::active().ops.push_back(n);
  }
  return Tensor(n);
}

// ---------------------------------------------------------------------------
// Broadcasting (trailing-dimension rule)

namespace detail {

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;  // per out-dim strides (0 where broadcast)
  bool trivial_a = true, trivial_b = true;      // true when input shape == out
};

inline BroadcastPlan broadcast_shapes(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  const std::size_t nd = std::max(a.size(), b.size());
  plan.out.resize(nd);
  plan.stride_a.resize(nd);
  plan.stride_b.resize(nd);
  // Right-aligned dims.
  std::vector<std::size_t> da(nd, 1), db(nd, 1);
  for (std::size_t i = 0; i < a.size(); ++i) da[nd - a.size() + i] = a[i];
  for (std::size_t i = 0; i < b.size(); ++i) db[nd - b.size() + i] = b[i];
  for (std::size_t i = 0; i < nd; ++i) {
    if (da[i] == db[i]) {
      plan.out[i] = da[i];
    } else if (da[i] == 1) {
      plan.out[i] = db[i];
    } else if (db[i] == 1) {
      plan.out[i] = da[i];
    } else {
      throw TensorError("shapes not broadcastable: " + shape_str(a) + " vs " + shape_str(b));
    }
  }
  // Row-major strides, zeroed on broadcast dims.
  std::size_t sa = 1, sb = 1;
  for (std::size_t i = nd; i-- > 0;) {
    plan.stride_a[i] = (da[i] == 1 && plan.out[i] != 1) ? 0 : sa;
    plan.stride_b[i] = (db[i] == 1 && plan.out[i] != 1) ? 0 : sb;
    sa *= da[i];
    sb *= db[i];
  }
  plan.trivial_a = (da == plan.out);
  plan.trivial_b = (db == plan.out);
  return plan;
}

// Maps an output linear index to input linear indices under the plan.
struct BroadcastIndexer {
  const BroadcastPlan& plan;
  std::vector<std::size_t> out_stride;
  explicit BroadcastIndexer(const BroadcastPlan& p) : plan(p) {
    out_stride.resize(p.out.size());
    std::size_t s = 1;
    for (std::size_t i = p.out.size(); i-- > 0;) {
      out_stride[i] = s;
      s *= p.out[i];
    }
  }
  void map(std::size_t lin, std::size_t& ia, std::size_t& ib) const {
    ia = 0;
    ib = 0;
    for (std::size_t i = 0; i < out_stride.size(); ++i) {
      const std::size_t coord = (lin / out_stride[i]) % plan.out[i];
      ia += coord * plan.stride_a[i];
      ib += coord * plan.stride_b[i];
    }
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops

enum class BinaryKind { Add, Sub, Mul, Div };

inline Tensor binary_op(BinaryKind kind, const Tensor& a, const Tensor& b) {
  auto plan = detail::broadcast_shapes(a.shape(), b.shape());
  const std::size_t n = numel(plan.out);
  std::vector<double> out(n);
  const auto& av = a.data();
  const auto& bv = b.data();

  auto apply = [kind](double x, double y) {
    switch (kind) {
      case BinaryKind::Add: return x + y;
      case BinaryKind::Sub: return x - y;
      case BinaryKind::Mul: return x * y;
      case BinaryKind::Div: return x / y;
    }
    return 0.0;
  };

  detail::BroadcastIndexer idx(plan);
  if (plan.trivial_a && plan.trivial_b) {
    for (std::size_t i = 0; i < n; ++i) out[i] = apply(av[i], bv[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t ia, ib;
      idx.map(i, ia, ib);
      out[i] = apply(av[ia], bv[ib]);
    }
  }

  return make_op(plan.out, std::move(out), {a, b},
                 [kind, plan, av, bv](detail::Node& self) {
                   auto& pa = *self.parents[0];
                   auto& pb = *self.parents[1];
                   const bool need_a = detail::needs_grad(pa);
                   const bool need_b = detail::needs_grad(pb);
                   detail::BroadcastIndexer idx(plan);
                   for (std::size_t i = 0; i < self.value.size(); ++i) {
                     const double g = self.grad[i];
                     if (g == 0.0) continue;
                     std::size_t ia = i, ib = i;
                     if (!(plan.trivial_a && plan.trivial_b)) idx.map(i, ia, ib);
                     switch (kind) {
                       case BinaryKind::Add:
                         if (need_a) detail::accumulate(pa, ia, g);
                         if (need_b) detail::accumulate(pb, ib, g);
                         break;
                       case BinaryKind::Sub:
                         if (need_a) detail::accumulate(pa, ia, g);
                         if (need_b) detail::accumulate(pb, ib, -g);
                         break;
                       case BinaryKind::Mul:
                         if (need_a) detail::accumulate(pa, ia, g * bv[ib]);
                         if (need_b) detail::accumulate(pb, ib, g * av[ia]);
                         break;
                       case BinaryKind::Div:
                         if (need_a) detail::accumulate(pa, ia, g / bv[ib]);
                         if (need_b)
                           detail::accumulate(pb, ib, -g * av[ia] / (bv[ib] * bv[ib]));
                         break;
                     }
                   }
                 });
}

inline Tensor add(const Tensor& a, const Tensor& b) { return binary_op(BinaryKind::Add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(BinaryKind::Sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(BinaryKind::Mul, a, b); }
inline Tensor div(const Tensor& a, const Tensor& b) { return binary_op(BinaryKind::Div, a, b); }

// ---------------------------------------------------------------------------
// Elementwise unary ops

inline Tensor unary_op(const Tensor& a, std::function<double(double)> f,
                       std::function<double(double, double)> df /* (x, y) -> dy/dx */) {
  const auto& av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  std::vector<double> saved_out = out;
  return make_op(a.shape(), std::move(out), {a},
                 [av, saved_out = std::move(saved_out), df = std::move(df)](detail::Node& self) {
                   auto& p = *self.parents[0];
                   if (!(detail::needs_grad(p))) return;
                   for (std::size_t i = 0; i < self.value.size(); ++i)
                     detail::accumulate(p, i, self.grad[i] * df(av[i], saved_out[i]));
                 });
}

inline Tensor neg(const Tensor& a) {
  return unary_op(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}
inline Tensor exp(const Tensor& a) {
  return unary_op(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}
inline Tensor log(const Tensor& a) {
  return unary_op(a, [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}
// log(max(x, floor)); gradient is zero on the clamped branch.
inline Tensor log_clamped(const Tensor& a, double floor) {
  return unary_op(
      a, [floor](double x) { return std::log(x < floor ? floor : x); },
      [floor](double x, double) { return x < floor ? 0.0 : 1.0 / x; });
}
inline Tensor tanh(const Tensor& a) {
  return unary_op(a, [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}
inline Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a,
      [](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      },
      [](double, double y) { return y * (1.0 - y); });
}
inline Tensor leaky_relu(const Tensor& a, double slope) {
  return unary_op(a, [slope](double x) { return x >= 0.0 ? x : slope * x; },
                  [slope](double x, double) { return x >= 0.0 ? 1.0 : slope; });
}
inline Tensor mul_scalar(const Tensor& a, double c) {
  return unary_op(a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}
inline Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}
inline Tensor square(const Tensor& a) {
  return unary_op(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---------------------------------------------------------------------------
// Matrix ops (2-D)

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    throw TensorError("matmul expects 2-D tensors, got " + shape_str(a.shape()) + " and " +
                      shape_str(b.shape()));
  const std::size_t r = a.dim(0), k = a.dim(1), k2 = b.dim(0), c = b.dim(1);
  if (k != k2)
    throw TensorError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(r * c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = av[i * k + kk];
      if (aik == 0.0) continue;
      const double* brow = &bv[kk * c];
      double* orow = &out[i * c];
      for (std::size_t j = 0; j < c; ++j) orow[j] += aik * brow[j];
    }
  return make_op({r, c}, std::move(out), {a, b}, [r, k, c, av, bv](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    // dA = dC * B^T
    if (detail::needs_grad(pa)) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          const double g = self.grad[i * c + j];
          if (g == 0.0) continue;
          for (std::size_t kk = 0; kk < k; ++kk) pa.grad[i * k + kk] += g * bv[kk * c + j];
        }
    }
    // dB = A^T * dC
    if (detail::needs_grad(pb)) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double aik = av[i * k + kk];
          if (aik == 0.0) continue;
          for (std::size_t j = 0; j < c; ++j) pb.grad[kk * c + j] += aik * self.grad[i * c + j];
        }
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) throw TensorError("transpose expects a 2-D tensor");
  const std::size_t r = a.dim(0), c = a.dim(1);
  const auto& av = a.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return make_op({c, r}, std::move(out), {a}, [r, c](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!(detail::needs_grad(p))) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) p.grad[i * c + j] += self.grad[j * r + i];
  });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw TensorError("reshape to " + shape_str(shape) + " changes element count");
  std::vector<double> out = a.data();
  return make_op(std::move(shape), std::move(out), {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!(detail::needs_grad(p))) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.value.size(); ++i) p.grad[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_op(Shape{}, {s}, {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!(detail::needs_grad(p))) return;
    p.ensure_grad();
    const double g = self.grad[0];
    for (double& gv : p.grad) gv += g;
  });
}

inline Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw TensorError("mean of empty tensor");
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double inv = 1.0 / static_cast<double>(a.size());
  return make_op(Shape{}, {s * inv}, {a}, [inv](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!(detail::needs_grad(p))) return;
    p.ensure_grad();
    const double g = self.grad[0] * inv;
    for (double& gv : p.grad) gv += g;
  });
}

// Row sums of a (rows, cols) tensor -> (rows, 1).
inline Tensor row_sum(const Tensor& a) {
  if (a.ndim() != 2) throw TensorError("row_sum expects a 2-D tensor");
  const std::size_t r = a.dim(0), c = a.dim(1);
  const auto& av = a.data();
  std::vector<double> out(r, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += av[i * c + j];
  return make_op({r, 1}, std::move(out), {a}, [r, c](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!(detail::needs_grad(p))) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      const double g = self.grad[i];
      for (std::size_t j = 0; j < c; ++j) p.grad[i * c + j] += g;
    }
  });
}

// ---------------------------------------------------------------------------
// Backward pass

inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw TensorError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  auto& tape = detail::Tape::active();
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = tape.ops.rbegin(); it != tape.ops.rend(); ++it) {
    auto& node = **it;
    if (node.grad.size() != node.value.size()) continue;  // not reached by loss
    if (node.backprop) node.backprop(node);
  }
  // Tape is per-forward-pass: drop intermediate grads, keep leaf grads.
  tape.reset();
}

inline void clear_tape() { detail::Tape::active().reset(); }

// Exclude a parameter set from gradient accumulation until the next
// backward()/clear_tape(), while still letting gradients flow through it.
inline void freeze_until_backward(const std::vector<Tensor>& params) {
  auto& tape = detail::Tape::active();
  for (const auto& t : params) {
    t.node()->frozen = true;
    tape.frozen.push_back(t.node());
  }
}

}  // namespace dmd
