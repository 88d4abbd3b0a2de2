// Dense N-d tensor with reverse-mode autodiff.
//
// A TensorT is a handle onto a tape node holding the value buffer, an
// optional gradient buffer, and — while a forward graph is alive — the
// parent edges and a backward closure. Graphs are built implicitly by the
// free-function ops below whenever gradient recording is enabled and at
// least one operand requires a gradient. backward() traverses the tape in
// reverse creation order, visits each node exactly once, and then frees
// the tape edges so intermediate buffers can be reclaimed.
//
// Two scalar instantiations are used throughout the repo:
//   TensorT<float>   training and inference
//   TensorT<double>  finite-difference gradient checking
#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>

#include "depthnet/common.hpp"

namespace depthnet {

// Thread-local gradient recording switch.
struct GradMode {
  static bool& flag() {
    thread_local bool on = true;
    return on;
  }
  static bool enabled() { return flag(); }
};

struct NoGradGuard {
  NoGradGuard() : prev_(GradMode::flag()) { GradMode::flag() = false; }
  ~NoGradGuard() { GradMode::flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename S>
struct NodeT;

// Redirects gradient accumulation for selected nodes (parameter leaves) to
// buffers owned by the installing thread. Lets batch elements run backward
// concurrently on shared parameters; the caller merges the buffers in a
// fixed order afterwards, keeping results bit-reproducible.
template <typename S>
class GradSinkScope {
 public:
  using Map = std::unordered_map<const NodeT<S>*, std::vector<S>*>;

  explicit GradSinkScope(Map* m) : prev_(current()) { current() = m; }
  ~GradSinkScope() { current() = prev_; }
  GradSinkScope(const GradSinkScope&) = delete;
  GradSinkScope& operator=(const GradSinkScope&) = delete;

  static Map*& current() {
    thread_local Map* m = nullptr;
    return m;
  }

 private:
  Map* prev_;
};

template <typename S>
struct NodeT {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // lazily sized to value.size()
  bool requires_grad = false;
  int64_t id = 0;

  // Tape edges; cleared after backward().
  std::vector<std::shared_ptr<NodeT>> parents;
  std::function<void(NodeT&)> backward_fn;

  std::vector<S>& ensure_grad() {
    if (auto* m = GradSinkScope<S>::current()) {
      auto it = m->find(this);
      if (it != m->end()) {
        if (it->second->size() != value.size()) it->second->assign(value.size(), S(0));
        return *it->second;
      }
    }
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
    return grad;
  }

  static int64_t next_id() {
    static std::atomic<int64_t> counter{0};
    return ++counter;
  }
};

template <typename S>
class TensorT {
 public:
  using Scalar = S;

  TensorT() = default;

  explicit TensorT(Shape shape, S fill = S(0)) {
    node_ = std::make_shared<NodeT<S>>();
    node_->shape = std::move(shape);
    node_->value.assign(numel(node_->shape), fill);
    node_->id = NodeT<S>::next_id();
  }

  TensorT(Shape shape, std::vector<S> values) {
    if (int64_t(values.size()) != numel(shape))
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    node_ = std::make_shared<NodeT<S>>();
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->id = NodeT<S>::next_id();
  }

  static TensorT zeros(Shape shape) { return TensorT(std::move(shape), S(0)); }
  static TensorT ones(Shape shape) { return TensorT(std::move(shape), S(1)); }
  static TensorT full(Shape shape, S v) { return TensorT(std::move(shape), v); }
  static TensorT scalar(S v) { return TensorT(Shape{1}, std::vector<S>{v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return int(node_->shape.size()); }
  int dim(int i) const { return node_->shape[size_t(i)]; }
  int64_t size() const { return int64_t(node_->value.size()); }

  std::vector<S>& values() { return node_->value; }
  const std::vector<S>& values() const { return node_->value; }
  S* data() { return node_->value.data(); }
  const S* data() const { return node_->value.data(); }

  S item() const {
    if (size() != 1)
      throw ShapeError("item() requires a one-element tensor, got " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }
  std::vector<S>& grad() { return node_->ensure_grad(); }
  const std::vector<S>& grad() const { return node_->grad; }
  void zero_grad() {
    if (node_) node_->ensure_grad().assign(node_->value.size(), S(0));
  }

  std::shared_ptr<NodeT<S>> node() const { return node_; }

  static TensorT from_node(std::shared_ptr<NodeT<S>> n) {
    TensorT t;
    t.node_ = std::move(n);
    return t;
  }

  // Reverse-mode sweep from a scalar loss. Visits each reachable tape node
  // exactly once in reverse creation order, then frees the tape edges.
  void backward() const {
    if (!node_) throw ValueError("backward() on an undefined tensor");
    if (size() != 1)
      throw ValueError("backward() requires a scalar loss, got shape " + shape_str(shape()));
    if (!node_->requires_grad) return;

    // Strong references keep every visited node alive until the sweep and
    // the tape teardown below are both done.
    std::vector<std::shared_ptr<NodeT<S>>> order;
    std::unordered_set<NodeT<S>*> seen;
    std::vector<std::shared_ptr<NodeT<S>>> stack{node_};
    seen.insert(node_.get());
    while (!stack.empty()) {
      std::shared_ptr<NodeT<S>> n = stack.back();
      stack.pop_back();
      for (auto& p : n->parents) {
        if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p);
      }
      order.push_back(std::move(n));
    }
    // Parents are always created before their consumers, so descending id
    // order is a topological order of the tape.
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a->id > b->id; });

    node_->ensure_grad()[0] = S(1);
    for (auto& n : order) {
      if (n->backward_fn) n->backward_fn(*n);
    }
    // Free the tape. Leaves (no closure) are skipped: they may be shared
    // with other tapes running backward concurrently.
    for (auto& n : order) {
      if (n->backward_fn) {
        n->backward_fn = nullptr;
        n->parents.clear();
      }
    }
  }

 private:
  std::shared_ptr<NodeT<S>> node_;
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

namespace detail {

// Assembles a result node; records tape edges only when recording is on and
// some parent requires a gradient.
template <typename S>
TensorT<S> make_result(Shape shape, std::vector<S> values,
                       std::vector<TensorT<S>> parents,
                       std::function<void(NodeT<S>&)> backward_fn) {
  TensorT<S> out(std::move(shape), std::move(values));
  bool needs = false;
  if (GradMode::enabled()) {
    for (const auto& p : parents)
      if (p.defined() && p.requires_grad()) needs = true;
  }
  if (needs) {
    auto n = out.node();
    n->requires_grad = true;
    for (const auto& p : parents)
      if (p.defined()) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return out;
}

// Strict trailing-singleton broadcast: b's leading extents must equal a's
// and every remaining extent of b must be 1. Returns b's element count.
template <typename S>
int64_t broadcast_lead(const TensorT<S>& a, const TensorT<S>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size())
    throw ShapeError("rank mismatch between " + shape_str(sa) + " and " + shape_str(sb));
  size_t k = sa.size();
  while (k > 0 && sb[k - 1] == 1 && sa[k - 1] != sb[k - 1]) --k;
  for (size_t i = 0; i < k; ++i)
    if (sa[i] != sb[i])
      throw ShapeError("shapes " + shape_str(sa) + " and " + shape_str(sb) +
                       " are not broadcast-compatible");
  for (size_t i = k; i < sb.size(); ++i)
    if (sb[i] != 1)
      throw ShapeError("shapes " + shape_str(sa) + " and " + shape_str(sb) +
                       " are not broadcast-compatible");
  int64_t lead = 1;
  for (size_t i = 0; i < k; ++i) lead *= sb[i];
  return lead;
}

}  // namespace detail

enum class BinaryKind { add, sub, mul };

template <typename S>
TensorT<S> binary_elementwise(const TensorT<S>& a, const TensorT<S>& b, BinaryKind kind) {
  const int64_t lead = detail::broadcast_lead(a, b);
  const int64_t rep = a.size() / std::max<int64_t>(lead, 1);
  const S* av = a.data();
  const S* bv = b.data();
  std::vector<S> out(size_t(a.size()));
  for (int64_t l = 0; l < lead; ++l) {
    const S bl = bv[l];
    S* o = out.data() + l * rep;
    const S* ai = av + l * rep;
    switch (kind) {
      case BinaryKind::add:
        for (int64_t t = 0; t < rep; ++t) o[t] = ai[t] + bl;
        break;
      case BinaryKind::sub:
        for (int64_t t = 0; t < rep; ++t) o[t] = ai[t] - bl;
        break;
      case BinaryKind::mul:
        for (int64_t t = 0; t < rep; ++t) o[t] = ai[t] * bl;
        break;
    }
  }
  return detail::make_result<S>(
      a.shape(), std::move(out), {a, b}, [kind, lead, rep](NodeT<S>& n) {
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        const S* go = n.grad.data();
        if (pa->requires_grad) {
          S* ga = pa->ensure_grad().data();
          if (kind == BinaryKind::mul) {
            const S* bv = pb->value.data();
            for (int64_t l = 0; l < lead; ++l)
              for (int64_t t = 0; t < rep; ++t) ga[l * rep + t] += go[l * rep + t] * bv[l];
          } else {
            for (int64_t i = 0; i < lead * rep; ++i) ga[i] += go[i];
          }
        }
        if (pb->requires_grad) {
          S* gb = pb->ensure_grad().data();
          const S* av = pa->value.data();
          for (int64_t l = 0; l < lead; ++l) {
            S acc = S(0);
            for (int64_t t = 0; t < rep; ++t) {
              const int64_t i = l * rep + t;
              switch (kind) {
                case BinaryKind::add: acc += go[i]; break;
                case BinaryKind::sub: acc -= go[i]; break;
                case BinaryKind::mul: acc += go[i] * av[i]; break;
              }
            }
            gb[l] += acc;
          }
        }
      });
}

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  return binary_elementwise(a, b, BinaryKind::add);
}
template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  return binary_elementwise(a, b, BinaryKind::sub);
}
template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  return binary_elementwise(a, b, BinaryKind::mul);
}

template <typename S>
TensorT<S> operator+(const TensorT<S>& a, const TensorT<S>& b) { return add(a, b); }
template <typename S>
TensorT<S> operator-(const TensorT<S>& a, const TensorT<S>& b) { return sub(a, b); }
template <typename S>
TensorT<S> operator*(const TensorT<S>& a, const TensorT<S>& b) { return mul(a, b); }

template <typename S>
TensorT<S> add_scalar(const TensorT<S>& x, S c) {
  std::vector<S> out(x.values());
  for (S& v : out) v += c;
  return detail::make_result<S>(x.shape(), std::move(out), {x}, [](NodeT<S>& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    S* g = p->ensure_grad().data();
    const S* go = n.grad.data();
    for (size_t i = 0; i < n.grad.size(); ++i) g[i] += go[i];
  });
}

template <typename S>
TensorT<S> mul_scalar(const TensorT<S>& x, S c) {
  std::vector<S> out(x.values());
  for (S& v : out) v *= c;
  return detail::make_result<S>(x.shape(), std::move(out), {x}, [c](NodeT<S>& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    S* g = p->ensure_grad().data();
    const S* go = n.grad.data();
    for (size_t i = 0; i < n.grad.size(); ++i) g[i] += go[i] * c;
  });
}

// c - x
template <typename S>
TensorT<S> sub_from_scalar(S c, const TensorT<S>& x) {
  std::vector<S> out(x.values());
  for (S& v : out) v = c - v;
  return detail::make_result<S>(x.shape(), std::move(out), {x}, [](NodeT<S>& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    S* g = p->ensure_grad().data();
    const S* go = n.grad.data();
    for (size_t i = 0; i < n.grad.size(); ++i) g[i] -= go[i];
  });
}

enum class Act { sigmoid, gelu, relu };

template <typename S>
S sigmoid_scalar(S x) {
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <typename S>
TensorT<S> activation(const TensorT<S>& x, Act kind) {
  const S* xv = x.data();
  std::vector<S> out(size_t(x.size()));
  constexpr S inv_sqrt2 = S(0.70710678118654752440);
  switch (kind) {
    case Act::sigmoid:
      for (int64_t i = 0; i < x.size(); ++i) out[i] = sigmoid_scalar(xv[i]);
      break;
    case Act::gelu:
      for (int64_t i = 0; i < x.size(); ++i)
        out[i] = S(0.5) * xv[i] * (S(1) + std::erf(xv[i] * inv_sqrt2));
      break;
    case Act::relu:
      for (int64_t i = 0; i < x.size(); ++i) out[i] = xv[i] > S(0) ? xv[i] : S(0);
      break;
  }
  return detail::make_result<S>(x.shape(), std::move(out), {x}, [kind](NodeT<S>& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    S* g = p->ensure_grad().data();
    const S* go = n.grad.data();
    const S* xv = p->value.data();
    const S* yv = n.value.data();
    constexpr S inv_sqrt2 = S(0.70710678118654752440);
    constexpr S inv_sqrt2pi = S(0.39894228040143267794);
    switch (kind) {
      case Act::sigmoid:
        for (size_t i = 0; i < n.grad.size(); ++i) g[i] += go[i] * yv[i] * (S(1) - yv[i]);
        break;
      case Act::gelu:
        for (size_t i = 0; i < n.grad.size(); ++i) {
          const S cdf = S(0.5) * (S(1) + std::erf(xv[i] * inv_sqrt2));
          const S pdf = inv_sqrt2pi * std::exp(S(-0.5) * xv[i] * xv[i]);
          g[i] += go[i] * (cdf + xv[i] * pdf);
        }
        break;
      case Act::relu:
        for (size_t i = 0; i < n.grad.size(); ++i) g[i] += xv[i] > S(0) ? go[i] : S(0);
        break;
    }
  });
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& x) { return activation(x, Act::sigmoid); }
template <typename S>
TensorT<S> gelu(const TensorT<S>& x) { return activation(x, Act::gelu); }
template <typename S>
TensorT<S> relu(const TensorT<S>& x) { return activation(x, Act::relu); }

template <typename S>
TensorT<S> softplus(const TensorT<S>& x) {
  const S* xv = x.data();
  std::vector<S> out(size_t(x.size()));
  for (int64_t i = 0; i < x.size(); ++i) {
    const S v = xv[i];
    out[i] = v > S(30) ? v : std::log1p(std::exp(v));
  }
  return detail::make_result<S>(x.shape(), std::move(out), {x}, [](NodeT<S>& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    S* g = p->ensure_grad().data();
    const S* go = n.grad.data();
    const S* xv = p->value.data();
    for (size_t i = 0; i < n.grad.size(); ++i) g[i] += go[i] * sigmoid_scalar(xv[i]);
  });
}

template <typename S>
TensorT<S> log_op(const TensorT<S>& x) {
  const S* xv = x.data();
  std::vector<S> out(size_t(x.size()));
  for (int64_t i = 0; i < x.size(); ++i) out[i] = std::log(xv[i]);
  return detail::make_result<S>(x.shape(), std::move(out), {x}, [](NodeT<S>& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    S* g = p->ensure_grad().data();
    const S* go = n.grad.data();
    const S* xv = p->value.data();
    for (size_t i = 0; i < n.grad.size(); ++i) g[i] += go[i] / xv[i];
  });
}

template <typename S>
TensorT<S> sqrt_op(const TensorT<S>& x) {
  const S* xv = x.data();
  std::vector<S> out(size_t(x.size()));
  for (int64_t i = 0; i < x.size(); ++i) out[i] = std::sqrt(xv[i]);
  return detail::make_result<S>(x.shape(), std::move(out), {x}, [](NodeT<S>& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    S* g = p->ensure_grad().data();
    const S* go = n.grad.data();
    const S* yv = n.value.data();
    for (size_t i = 0; i < n.grad.size(); ++i) g[i] += go[i] * S(0.5) / yv[i];
  });
}

// max(x, c); subgradient 0 on the clamped side.
template <typename S>
TensorT<S> clamp_min(const TensorT<S>& x, S c) {
  const S* xv = x.data();
  std::vector<S> out(size_t(x.size()));
  for (int64_t i = 0; i < x.size(); ++i) out[i] = xv[i] > c ? xv[i] : c;
  return detail::make_result<S>(x.shape(), std::move(out), {x}, [c](NodeT<S>& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    S* g = p->ensure_grad().data();
    const S* go = n.grad.data();
    const S* xv = p->value.data();
    for (size_t i = 0; i < n.grad.size(); ++i)
      if (xv[i] > c) g[i] += go[i];
  });
}

template <typename S>
TensorT<S> reciprocal(const TensorT<S>& x) {
  const S* xv = x.data();
  std::vector<S> out(size_t(x.size()));
  for (int64_t i = 0; i < x.size(); ++i) out[i] = S(1) / xv[i];
  return detail::make_result<S>(x.shape(), std::move(out), {x}, [](NodeT<S>& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    S* g = p->ensure_grad().data();
    const S* go = n.grad.data();
    const S* yv = n.value.data();
    for (size_t i = 0; i < n.grad.size(); ++i) g[i] -= go[i] * yv[i] * yv[i];
  });
}

template <typename S>
TensorT<S> softmax(const TensorT<S>& x, int axis) {
  if (axis < 0 || axis >= x.rank())
    throw ValueError("softmax axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(x.shape()));
  const Shape& sh = x.shape();
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= sh[size_t(i)];
  for (size_t i = size_t(axis) + 1; i < sh.size(); ++i) inner *= sh[i];
  const int64_t n = sh[size_t(axis)];
  const S* xv = x.data();
  std::vector<S> out(size_t(x.size()));
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * n * inner + in;
      S mx = xv[base];
      for (int64_t k = 1; k < n; ++k) mx = std::max(mx, xv[base + k * inner]);
      S sum = S(0);
      for (int64_t k = 0; k < n; ++k) {
        const S e = std::exp(xv[base + k * inner] - mx);
        out[size_t(base + k * inner)] = e;
        sum += e;
      }
      const S inv = S(1) / sum;
      for (int64_t k = 0; k < n; ++k) out[size_t(base + k * inner)] *= inv;
    }
  }
  return detail::make_result<S>(
      x.shape(), std::move(out), {x}, [outer, inner, n](NodeT<S>& n_) {
        auto& p = n_.parents[0];
        if (!p->requires_grad) return;
        S* g = p->ensure_grad().data();
        const S* go = n_.grad.data();
        const S* yv = n_.value.data();
        for (int64_t o = 0; o < outer; ++o) {
          for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * n * inner + in;
            S dot = S(0);
            for (int64_t k = 0; k < n; ++k) dot += go[base + k * inner] * yv[base + k * inner];
            for (int64_t k = 0; k < n; ++k) {
              const int64_t i = base + k * inner;
              g[i] += yv[i] * (go[i] - dot);
            }
          }
        }
      });
}

template <typename S>
TensorT<S> sum(const TensorT<S>& x) {
  S acc = S(0);
  const S* xv = x.data();
  for (int64_t i = 0; i < x.size(); ++i) acc += xv[i];
  return detail::make_result<S>(Shape{1}, std::vector<S>{acc}, {x}, [](NodeT<S>& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    S* g = p->ensure_grad().data();
    const S go = n.grad[0];
    for (size_t i = 0; i < p->value.size(); ++i) g[i] += go;
  });
}

template <typename S>
TensorT<S> mean(const TensorT<S>& x) {
  return mul_scalar(sum(x), S(1) / S(x.size()));
}

template <typename S>
TensorT<S> sum_axis(const TensorT<S>& x, int axis) {
  if (axis < 0 || axis >= x.rank())
    throw ValueError("sum_axis axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(x.shape()));
  const Shape& sh = x.shape();
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= sh[size_t(i)];
  for (size_t i = size_t(axis) + 1; i < sh.size(); ++i) inner *= sh[i];
  const int64_t n = sh[size_t(axis)];
  Shape out_shape;
  for (int i = 0; i < x.rank(); ++i)
    if (i != axis) out_shape.push_back(sh[size_t(i)]);
  if (out_shape.empty()) out_shape.push_back(1);
  const S* xv = x.data();
  std::vector<S> out(size_t(outer * inner), S(0));
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t k = 0; k < n; ++k) {
      const S* row = xv + (o * n + k) * inner;
      S* dst = out.data() + o * inner;
      for (int64_t in = 0; in < inner; ++in) dst[in] += row[in];
    }
  return detail::make_result<S>(
      std::move(out_shape), std::move(out), {x}, [outer, inner, n](NodeT<S>& n_) {
        auto& p = n_.parents[0];
        if (!p->requires_grad) return;
        S* g = p->ensure_grad().data();
        const S* go = n_.grad.data();
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t k = 0; k < n; ++k) {
            S* dst = g + (o * n + k) * inner;
            const S* src = go + o * inner;
            for (int64_t in = 0; in < inner; ++in) dst[in] += src[in];
          }
      });
}

template <typename S>
TensorT<S> reshape(const TensorT<S>& x, Shape new_shape) {
  if (numel(new_shape) != x.size())
    throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(new_shape));
  return detail::make_result<S>(std::move(new_shape), x.values(), {x}, [](NodeT<S>& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    S* g = p->ensure_grad().data();
    const S* go = n.grad.data();
    for (size_t i = 0; i < n.grad.size(); ++i) g[i] += go[i];
  });
}

template <typename S>
TensorT<S> concat(const std::vector<TensorT<S>>& parts, int axis = 0) {
  if (parts.empty()) throw ValueError("concat of zero tensors");
  const int rank = parts[0].rank();
  if (axis < 0 || axis >= rank) throw ValueError("concat axis out of range");
  Shape out_shape = parts[0].shape();
  int64_t axis_total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank)
      throw ShapeError("concat rank mismatch: " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    for (int i = 0; i < rank; ++i)
      if (i != axis && p.dim(i) != out_shape[size_t(i)])
        throw ShapeError("concat extent mismatch: " + shape_str(parts[0].shape()) + " vs " +
                         shape_str(p.shape()));
    axis_total += p.dim(axis);
  }
  out_shape[size_t(axis)] = int(axis_total);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[size_t(i)];
  for (int i = axis + 1; i < rank; ++i) inner *= out_shape[size_t(i)];

  std::vector<S> out(size_t(numel(out_shape)));
  std::vector<int64_t> spans;  // per-part axis extent * inner
  spans.reserve(parts.size());
  for (const auto& p : parts) spans.push_back(int64_t(p.dim(axis)) * inner);
  const int64_t out_stride = axis_total * inner;
  for (int64_t o = 0; o < outer; ++o) {
    int64_t off = 0;
    for (size_t pi = 0; pi < parts.size(); ++pi) {
      const S* src = parts[pi].data() + o * spans[pi];
      std::copy(src, src + spans[pi], out.data() + o * out_stride + off);
      off += spans[pi];
    }
  }
  return detail::make_result<S>(
      std::move(out_shape), std::move(out), parts,
      [outer, spans, out_stride](NodeT<S>& n) {
        const S* go = n.grad.data();
        for (int64_t o = 0; o < outer; ++o) {
          int64_t off = 0;
          for (size_t pi = 0; pi < n.parents.size(); ++pi) {
            auto& p = n.parents[pi];
            if (p->requires_grad) {
              S* g = p->ensure_grad().data() + o * spans[pi];
              const S* src = go + o * out_stride + off;
              for (int64_t i = 0; i < spans[pi]; ++i) g[i] += src[i];
            }
            off += spans[pi];
          }
        }
      });
}

template <typename S>
TensorT<S> slice_axis0(const TensorT<S>& x, int start, int len) {
  if (x.rank() < 1 || start < 0 || len <= 0 || start + len > x.dim(0))
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + len) +
                     ") out of range for shape " + shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape[0] = len;
  int64_t inner = 1;
  for (int i = 1; i < x.rank(); ++i) inner *= x.dim(i);
  std::vector<S> out(x.data() + start * inner, x.data() + (start + len) * inner);
  return detail::make_result<S>(
      std::move(out_shape), std::move(out), {x}, [start, inner](NodeT<S>& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        S* g = p->ensure_grad().data() + start * inner;
        const S* go = n.grad.data();
        for (size_t i = 0; i < n.grad.size(); ++i) g[i] += go[i];
      });
}

// Flip along the last (width) axis.
template <typename S>
TensorT<S> hflip(const TensorT<S>& x) {
  const int w = x.dim(x.rank() - 1);
  const int64_t rows = x.size() / w;
  const S* xv = x.data();
  std::vector<S> out(size_t(x.size()));
  for (int64_t r = 0; r < rows; ++r)
    for (int c = 0; c < w; ++c) out[size_t(r * w + c)] = xv[r * w + (w - 1 - c)];
  return detail::make_result<S>(x.shape(), std::move(out), {x}, [w, rows](NodeT<S>& n) {
    auto& p = n.parents[0];
    if (!p->requires_grad) return;
    S* g = p->ensure_grad().data();
    const S* go = n.grad.data();
    for (int64_t r = 0; r < rows; ++r)
      for (int c = 0; c < w; ++c) g[r * w + (w - 1 - c)] += go[r * w + c];
  });
}

// x [N,D] (or [D]) times w [D,M] plus optional bias [M].
template <typename S>
TensorT<S> linear(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b = {}) {
  if (w.rank() != 2) throw ShapeError("linear weight must be rank 2, got " + shape_str(w.shape()));
  const int d = w.dim(0), m = w.dim(1);
  const bool vec = x.rank() == 1;
  if ((vec && x.dim(0) != d) || (!vec && (x.rank() != 2 || x.dim(1) != d)))
    throw ShapeError("linear input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(w.shape()));
  if (b.defined() && (b.rank() != 1 || b.dim(0) != m))
    throw ShapeError("linear bias must have shape [" + std::to_string(m) + "], got " +
                     shape_str(b.shape()));
  const int nrows = vec ? 1 : x.dim(0);
  const S* xv = x.data();
  const S* wv = w.data();
  std::vector<S> out(size_t(nrows) * m, S(0));
  for (int r = 0; r < nrows; ++r) {
    const S* xr = xv + int64_t(r) * d;
    S* orow = out.data() + int64_t(r) * m;
    for (int i = 0; i < d; ++i) {
      const S xi = xr[i];
      const S* wrow = wv + int64_t(i) * m;
      for (int j = 0; j < m; ++j) orow[j] += xi * wrow[j];
    }
    if (b.defined()) {
      const S* bv = b.data();
      for (int j = 0; j < m; ++j) orow[j] += bv[j];
    }
  }
  Shape out_shape = vec ? Shape{m} : Shape{nrows, m};
  const bool has_bias = b.defined();
  std::vector<TensorT<S>> parents = has_bias ? std::vector<TensorT<S>>{x, w, b}
                                             : std::vector<TensorT<S>>{x, w};
  return detail::make_result<S>(
      std::move(out_shape), std::move(out), std::move(parents),
      [nrows, d, m, has_bias](NodeT<S>& n) {
        auto& px = n.parents[0];
        auto& pw = n.parents[1];
        const S* go = n.grad.data();
        const S* xv = px->value.data();
        const S* wv = pw->value.data();
        if (px->requires_grad) {
          S* gx = px->ensure_grad().data();
          for (int r = 0; r < nrows; ++r) {
            const S* grow = go + int64_t(r) * m;
            S* gxr = gx + int64_t(r) * d;
            for (int i = 0; i < d; ++i) {
              const S* wrow = wv + int64_t(i) * m;
              S acc = S(0);
              for (int j = 0; j < m; ++j) acc += grow[j] * wrow[j];
              gxr[i] += acc;
            }
          }
        }
        if (pw->requires_grad) {
          S* gw = pw->ensure_grad().data();
          for (int r = 0; r < nrows; ++r) {
            const S* grow = go + int64_t(r) * m;
            const S* xr = xv + int64_t(r) * d;
            for (int i = 0; i < d; ++i) {
              const S xi = xr[i];
              S* gwrow = gw + int64_t(i) * m;
              for (int j = 0; j < m; ++j) gwrow[j] += xi * grow[j];
            }
          }
        }
        if (has_bias && n.parents[2]->requires_grad) {
          S* gb = n.parents[2]->ensure_grad().data();
          for (int r = 0; r < nrows; ++r) {
            const S* grow = go + int64_t(r) * m;
            for (int j = 0; j < m; ++j) gb[j] += grow[j];
          }
        }
      });
}

}  // namespace depthnet
