// Copyright 2026 The DBLN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Reverse-mode differentiation over dense double arrays (rank 0, 1 or 2).
//
// Every operation allocates a result node that keeps shared ownership of its
// inputs and a closure propagating the output gradient back to them. The graph
// is rebuilt on every forward pass and freed when the last Tensor handle to the
// loss goes away. Leaves created with requires_grad accumulate gradients across
// backward() calls until zero_grad() is called.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace dbln {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct Node;
using BackwardFn = std::function<void(Node&)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  bool is_leaf() const { return !backward; }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

inline thread_local int no_grad_depth = 0;

}  // namespace detail

/// While alive, new operations on this thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape_size(shape) != values.size()) {
      throw ShapeError("tensor shape " + shape_string(shape) + " holds " +
                       std::to_string(shape_size(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_size(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) { return from({}, {v}, requires_grad); }
  static Tensor vector(std::vector<double> v, bool requires_grad = false) {
    const std::size_t n = v.size();
    return from({n}, std::move(v), requires_grad);
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v,
                       bool requires_grad = false) {
    return from({rows, cols}, std::move(v), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return rank() == 0 ? 1 : node_->shape[0]; }
  std::size_t cols() const { return rank() < 2 ? 1 : node_->shape[1]; }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> values() const { return node_->value; }
  /// Direct write access; only meaningful on leaves (parameters, inputs).
  std::span<double> mutable_values() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  double item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
  }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  /// Constant copy with no graph history.
  Tensor detach() const { return from(shape(), node_->value, false); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op(Shape, std::vector<double>, std::vector<Tensor>, detail::BackwardFn);
};

/// Builds an operation result. `backward` receives the result node after its
/// gradient is final and must add into the gradients of the parents that
/// require one (their grad buffers are already allocated).
inline Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                      detail::BackwardFn backward) {
  Tensor out = Tensor::from(std::move(shape), std::move(value));
  if (detail::no_grad_depth > 0) return out;
  const bool any = std::any_of(parents.begin(), parents.end(),
                               [](const Tensor& p) { return p.requires_grad(); });
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) out.node_->parents.push_back(p.node_);
  out.node_->backward = std::move(backward);
  return out;
}

/// Gradient buffer of a parent inside a backward closure, or nullptr when the
/// parent takes no gradient.
inline double* grad_of(const Tensor& t) {
  return t.requires_grad() ? t.node()->grad.data() : nullptr;
}

/// Reverse sweep from a scalar. Interior gradients are recomputed; leaf
/// gradients accumulate.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward() requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (node->is_leaf()) {
      node->ensure_grad();
    } else {
      node->grad.assign(node->value.size(), 0.0);
    }
  }
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward(**it);
  }
}

namespace detail {

template <class F, class DF>
Tensor unary(const Tensor& x, F f, DF df) {
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_op(x.shape(), std::move(out), {x}, [x, df](Node& self) {
    double* gx = grad_of(x);
    const auto xv = x.values();
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      gx[i] += self.grad[i] * df(xv[i], self.value[i]);
    }
  });
}

inline Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.size() == 1) return a.shape();
  if (a.size() == 1) return b.shape();
  throw ShapeError(std::string("shape mismatch in ") + op + ": " + shape_string(a.shape()) +
                   " vs " + shape_string(b.shape()));
}

// f(a, b) -> value; da(a, b, out) and db(a, b, out) are partial derivatives.
template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
  Shape shape = broadcast_shape(a, b, name);
  const std::size_t n = shape_size(shape);
  const bool sa = a.size() == 1 && n != 1;
  const bool sb = b.size() == 1 && n != 1;
  std::vector<double> out(n);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[sa ? 0 : i], bv[sb ? 0 : i]);
  return make_op(std::move(shape), std::move(out), {a, b}, [a, b, sa, sb, da, db](Node& self) {
    double* ga = grad_of(a);
    double* gb = grad_of(b);
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      const double x = av[sa ? 0 : i];
      const double y = bv[sb ? 0 : i];
      if (ga) ga[sa ? 0 : i] += self.grad[i] * da(x, y, self.value[i]);
      if (gb) gb[sb ? 0 : i] += self.grad[i] * db(x, y, self.value[i]);
    }
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (equal shapes, or one side holding a single value)
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Tensor mul_scalar(const Tensor& x, double c) {
  return detail::unary(x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

inline Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }

// ---------------------------------------------------------------------------
// Elementwise functions
// ---------------------------------------------------------------------------

inline Tensor square(const Tensor& x) {
  return detail::unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

inline Tensor sqrt(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::sqrt(v); },
                       [](double, double y) { return 0.5 / y; });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::log(v); },
                       [](double v, double) { return 1.0 / v; });
}

inline double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline double softplus(double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); }

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(x, [](double v) { return sigmoid(v); },
                       [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::tanh(v); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline Tensor softplus(const Tensor& x) {
  return detail::unary(x, [](double v) { return softplus(v); },
                       [](double v, double) { return sigmoid(v); });
}

/// max(x, c) elementwise; the subgradient at x == c goes to x.
inline Tensor maximum(const Tensor& x, double c) {
  return detail::unary(x, [c](double v) { return v >= c ? v : c; },
                       [c](double v, double) { return v >= c ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
  const auto xv = x.values();
  const double s = std::accumulate(xv.begin(), xv.end(), 0.0);
  return make_op({}, {s}, {x}, [x](detail::Node& self) {
    double* gx = grad_of(x);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += self.grad[0];
  });
}

inline Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.size())); }

/// Inner product of two equally sized tensors.
inline Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ShapeError("shape mismatch in dot: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  const auto av = a.values();
  const auto bv = b.values();
  const double s = std::inner_product(av.begin(), av.end(), bv.begin(), 0.0);
  return make_op({}, {s}, {a, b}, [a, b](detail::Node& self) {
    double* ga = grad_of(a);
    double* gb = grad_of(b);
    const double g = self.grad[0];
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
      if (ga) ga[i] += g * bv[i];
      if (gb) gb[i] += g * av[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra and layout
// ---------------------------------------------------------------------------

/// [m,n]x[n,p] -> [m,p]; [m,n]x[n] -> [m]; [n]x[n,p] -> [p].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() == 0 || b.rank() == 0 || a.rank() > 2 || b.rank() > 2) {
    throw ShapeError("matmul needs rank-1 or rank-2 operands, got " + shape_string(a.shape()) +
                     " and " + shape_string(b.shape()));
  }
  const bool a_vec = a.rank() == 1;
  const bool b_vec = b.rank() == 1;
  const std::size_t m = a_vec ? 1 : a.shape()[0];
  const std::size_t n = a_vec ? a.shape()[0] : a.shape()[1];
  const std::size_t nb = b.shape()[0];
  const std::size_t p = b_vec ? 1 : b.shape()[1];
  if (n != nb || (a_vec && b_vec)) {
    throw ShapeError("shape mismatch in matmul: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  Shape shape;
  if (!a_vec) shape.push_back(m);
  if (!b_vec) shape.push_back(p);

  std::vector<double> out(m * p, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = av[i * n + k];
      const double* brow = bv + k * p;
      double* orow = out.data() + i * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
  return make_op(std::move(shape), std::move(out), {a, b}, [a, b, m, n, p](detail::Node& self) {
    double* ga = grad_of(a);
    double* gb = grad_of(b);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        const double* brow = bv + k * p;
        const double* grow = g + i * p;
        if (ga) {
          double acc = 0.0;
          for (std::size_t j = 0; j < p; ++j) acc += grow[j] * brow[j];
          ga[i * n + k] += acc;
        }
        if (gb) {
          const double aik = av[i * n + k];
          double* gbrow = gb + k * p;
          for (std::size_t j = 0; j < p; ++j) gbrow[j] += aik * grow[j];
        }
      }
    }
  });
}

/// Adds a length-p row vector to every row of an [m,p] matrix.
inline Tensor add_rows(const Tensor& mat, const Tensor& row) {
  if (mat.rank() != 2 || row.size() != mat.shape()[1]) {
    throw ShapeError("shape mismatch in add_rows: " + shape_string(mat.shape()) + " vs " +
                     shape_string(row.shape()));
  }
  const std::size_t m = mat.shape()[0];
  const std::size_t p = mat.shape()[1];
  std::vector<double> out(mat.values().begin(), mat.values().end());
  const auto rv = row.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) out[i * p + j] += rv[j];
  return make_op(mat.shape(), std::move(out), {mat, row}, [mat, row, m, p](detail::Node& self) {
    double* gm = grad_of(mat);
    double* gr = grad_of(row);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        const double g = self.grad[i * p + j];
        if (gm) gm[i * p + j] += g;
        if (gr) gr[j] += g;
      }
    }
  });
}

/// Rows [begin, end) along the leading axis.
inline Tensor slice(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0 || begin > end || end > x.shape()[0]) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for shape " + shape_string(x.shape()));
  }
  const std::size_t stride = x.size() / x.shape()[0];
  Shape shape = x.shape();
  shape[0] = end - begin;
  std::vector<double> out(x.values().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                          x.values().begin() + static_cast<std::ptrdiff_t>(end * stride));
  const std::size_t offset = begin * stride;
  return make_op(std::move(shape), std::move(out), {x}, [x, offset](detail::Node& self) {
    double* gx = grad_of(x);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[offset + i] += self.grad[i];
  });
}

/// Column `c` of an [m,p] matrix as a length-m vector.
inline Tensor column(const Tensor& x, std::size_t c) {
  if (x.rank() != 2 || c >= x.shape()[1]) {
    throw ShapeError("column " + std::to_string(c) + " out of range for shape " +
                     shape_string(x.shape()));
  }
  const std::size_t m = x.shape()[0];
  const std::size_t p = x.shape()[1];
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = x.values()[i * p + c];
  return make_op({m}, std::move(out), {x}, [x, c, p](detail::Node& self) {
    double* gx = grad_of(x);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i * p + c] += self.grad[i];
  });
}

/// Concatenation along the leading axis; trailing dimensions must agree.
inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Shape shape = parts.front().shape();
  if (shape.empty()) throw ShapeError("concat needs rank >= 1");
  shape[0] = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    Shape tail_a(parts.front().shape().begin() + 1, parts.front().shape().end());
    Shape tail_b(p.shape().begin() + 1, p.shape().end());
    if (p.rank() == 0 || tail_a != tail_b) {
      throw ShapeError("shape mismatch in concat: " + shape_string(parts.front().shape()) +
                       " vs " + shape_string(p.shape()));
    }
    shape[0] += p.shape()[0];
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return make_op(std::move(shape), std::move(out), parts, [parts](detail::Node& self) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      if (double* gp = grad_of(p)) {
        for (std::size_t i = 0; i < p.size(); ++i) gp[i] += self.grad[offset + i];
      }
      offset += p.size();
    }
  });
}

}  // namespace dbln
