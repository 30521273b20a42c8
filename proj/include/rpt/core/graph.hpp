// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rpt/core/kernels.hpp"
#include "rpt/core/tensor.hpp"

namespace rpt {

enum class OpKind {
  Constant,
  Parameter,
  MatMul,
  MatMulNT,
  Add,
  Sub,
  Mul,
  Scale,
  Concat,
  Slice,
  GatherRows,
  Mean,
  Sum,
  LayerNorm,
  Gelu,
  Softmax,
  LogSoftmax,
  Log,
  Abs,
  L2Normalize,
  MaxPoolRows,
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : g_(g), id_(id) {}

  Graph& graph() const { return *g_; }
  std::size_t id() const { return id_; }
  bool valid() const { return g_ != nullptr; }

  const Shape& shape() const;
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const;
  const std::vector<double>& value() const;
  /// Gradient buffer after backward(); empty when the node took no gradient.
  const std::vector<double>& grad() const;
  double item() const;
  Tensor to_tensor() const { return Tensor(shape(), value()); }

 private:
  Graph* g_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run tape. Nodes are appended in evaluation order, so the node
/// vector is always a topological order of the computation.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  struct Node {
    OpKind op = OpKind::Constant;
    Shape shape;
    std::vector<double> owned;
    const std::vector<double>* borrowed = nullptr;
    Tensor* param = nullptr;
    std::vector<std::size_t> inputs;
    bool needs_grad = false;
    std::vector<double> grad;
    BackwardFn backward;

    const std::vector<double>& value() const { return borrowed ? *borrowed : owned; }
    std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
    std::size_t rows() const { return value().size() / cols(); }
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Owned copy of `t`; never differentiated.
  Var constant(const Tensor& t) { return constant(t.shape(), t.data()); }

  Var constant(Shape shape, std::vector<double> values) {
    if (numel(shape) != values.size())
      throw ShapeError("constant of shape " + shape_str(shape) + " given " +
                       std::to_string(values.size()) + " values");
    Node n;
    n.op = OpKind::Constant;
    n.shape = std::move(shape);
    n.owned = std::move(values);
    return append(std::move(n));
  }

  /// Borrowed read-only view of `t`; `t` must outlive the graph. Never
  /// differentiated, which is how frozen weights enter a computation.
  Var view(const Tensor& t) {
    Node n;
    n.op = OpKind::Constant;
    n.shape = t.shape();
    n.borrowed = &t.data();
    return append(std::move(n));
  }

  /// Borrowed leaf. When `t.requires_grad()`, backward() deposits into t's
  /// gradient buffer.
  Var param(Tensor& t) {
    Node n;
    n.op = OpKind::Parameter;
    n.shape = t.shape();
    n.borrowed = &t.data();
    n.param = &t;
    n.needs_grad = t.requires_grad();
    return append(std::move(n));
  }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  Node& node(std::size_t id) { return nodes_.at(id); }

  /// Number of values clamped by log() floors since construction.
  std::size_t clamp_events() const { return clamp_events_; }
  void note_clamps(std::size_t n) { clamp_events_ += n; }

  Var push(OpKind op, Shape shape, std::vector<double> value, std::vector<std::size_t> inputs,
           BackwardFn backward) {
    Node n;
    n.op = op;
    n.shape = std::move(shape);
    n.owned = std::move(value);
    n.inputs = std::move(inputs);
    for (std::size_t in : n.inputs) n.needs_grad = n.needs_grad || nodes_[in].needs_grad;
    if (n.needs_grad) n.backward = std::move(backward);
    return append(std::move(n));
  }

  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Zero-initialized gradient buffer of node `id`.
  std::vector<double>& grad_buffer(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value().size(), 0.0);
    return n.grad;
  }

  void reset_grads() {
    for (auto& n : nodes_) n.grad.clear();
  }

 private:
  Var append(Node n) {
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::size_t clamp_events_ = 0;
};

inline const Shape& Var::shape() const { return g_->node(id_).shape; }
inline std::size_t Var::rows() const { return g_->node(id_).rows(); }
inline std::size_t Var::cols() const { return g_->node(id_).cols(); }
inline std::size_t Var::size() const { return g_->node(id_).value().size(); }
inline const std::vector<double>& Var::value() const { return g_->node(id_).value(); }
inline const std::vector<double>& Var::grad() const { return g_->node(id_).grad; }
inline double Var::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return value()[0];
}

/// Reverse-mode sweep from a scalar `loss`. Gradients of parameter leaves are
/// added into the owning tensors when `deposit` is set.
inline void backward(Var loss, bool deposit = true) {
  Graph& g = loss.graph();
  if (loss.size() != 1)
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  g.reset_grads();
  if (!g.needs_grad(loss.id())) return;
  g.grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = g.node(i);
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(g, i);
    if (deposit && n.param != nullptr && n.param->requires_grad()) n.param->accumulate_grad(n.grad);
  }
}

/// Mutable tensors enter as differentiable leaves, const ones as frozen views.
inline Var bind(Graph& g, Tensor& t) { return g.param(t); }
inline Var bind(Graph& g, const Tensor& t) { return g.view(t); }

namespace detail {

inline void require_same_graph(const Var& a, const Var& b) {
  if (!a.valid() || !b.valid() || &a.graph() != &b.graph())
    throw Error("operands belong to different graphs");
}

inline std::string pair_str(const Var& a, const Var& b) {
  return shape_str(a.shape()) + " and " + shape_str(b.shape());
}

inline void add_into(std::vector<double>& dst, const std::vector<double>& src, double s = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

enum class Bcast { Same, Row };

inline Bcast broadcast_kind(const Var& a, const Var& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::Same;
  if (b.size() == a.cols() && b.rows() == 1) return Bcast::Row;
  throw ShapeError(std::string(op) + ": shape mismatch between " + pair_str(a, b));
}

inline Shape matrix_shape(std::size_t r, std::size_t c) { return Shape{r, c}; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(Var a, Var b) {
  detail::require_same_graph(a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw ShapeError("matmul: shape mismatch between " + detail::pair_str(a, b));
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_nn(m, k, n, a.value().data(), b.value().data(), out.data());
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().push(OpKind::MatMul, detail::matrix_shape(m, n), std::move(out), {ia, ib},
                        [=](Graph& g, std::size_t self) {
                          const auto& dc = g.node(self).grad;
                          if (g.needs_grad(ia)) {
                            auto& da = g.grad_buffer(ia);
                            kernels::gemm_nt(m, n, k, dc.data(), g.node(ib).value().data(), da.data());
                          }
                          if (g.needs_grad(ib)) {
                            auto& db = g.grad_buffer(ib);
                            kernels::gemm_tn(m, k, n, g.node(ia).value().data(), dc.data(), db.data());
                          }
                        });
}

/// a [m,k] times b^T where b is [n,k].
inline Var matmul_nt(Var a, Var b) {
  detail::require_same_graph(a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    throw ShapeError("matmul_nt: shape mismatch between " + detail::pair_str(a, b));
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_nt(m, k, n, a.value().data(), b.value().data(), out.data());
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().push(OpKind::MatMulNT, detail::matrix_shape(m, n), std::move(out), {ia, ib},
                        [=](Graph& g, std::size_t self) {
                          const auto& dc = g.node(self).grad;
                          if (g.needs_grad(ia)) {
                            auto& da = g.grad_buffer(ia);
                            kernels::gemm_nn(m, n, k, dc.data(), g.node(ib).value().data(), da.data());
                          }
                          if (g.needs_grad(ib)) {
                            auto& db = g.grad_buffer(ib);
                            kernels::gemm_tn(m, n, k, dc.data(), g.node(ia).value().data(), db.data());
                          }
                        });
}

// ---------------------------------------------------------------------------
// Elementwise. The right operand may be a single row broadcast over rows.

namespace detail {

template <class Fwd, class DA, class DB>
Var binary(OpKind op, const char* name, Var a, Var b, Fwd fwd, DA da_fn, DB db_fn) {
  require_same_graph(a, b);
  const Bcast bc = broadcast_kind(a, b, name);
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t cols = a.cols();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i)
    out[i] = fwd(av[i], bv[bc == Bcast::Same ? i : i % cols]);
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().push(op, a.shape(), std::move(out), {ia, ib}, [=](Graph& g, std::size_t self) {
    const auto& dc = g.node(self).grad;
    const auto& x = g.node(ia).value();
    const auto& y = g.node(ib).value();
    if (g.needs_grad(ia)) {
      auto& da = g.grad_buffer(ia);
      for (std::size_t i = 0; i < dc.size(); ++i)
        da[i] += da_fn(dc[i], x[i], y[bc == Bcast::Same ? i : i % cols]);
    }
    if (g.needs_grad(ib)) {
      auto& db = g.grad_buffer(ib);
      for (std::size_t i = 0; i < dc.size(); ++i) {
        const std::size_t j = bc == Bcast::Same ? i : i % cols;
        db[j] += db_fn(dc[i], x[i], y[j]);
      }
    }
  });
}

}  // namespace detail

inline Var add(Var a, Var b) {
  return detail::binary(
      OpKind::Add, "add", a, b, [](double x, double y) { return x + y; },
      [](double d, double, double) { return d; }, [](double d, double, double) { return d; });
}

inline Var sub(Var a, Var b) {
  return detail::binary(
      OpKind::Sub, "sub", a, b, [](double x, double y) { return x - y; },
      [](double d, double, double) { return d; }, [](double d, double, double) { return -d; });
}

inline Var mul(Var a, Var b) {
  return detail::binary(
      OpKind::Mul, "mul", a, b, [](double x, double y) { return x * y; },
      [](double d, double, double y) { return d * y; },
      [](double d, double x, double) { return d * x; });
}

inline Var scale(Var a, double s) {
  std::vector<double> out(a.value());
  for (auto& v : out) v *= s;
  const std::size_t ia = a.id();
  return a.graph().push(OpKind::Scale, a.shape(), std::move(out), {ia},
                        [=](Graph& g, std::size_t self) {
                          detail::add_into(g.grad_buffer(ia), g.node(self).grad, s);
                        });
}

// ---------------------------------------------------------------------------
// Structural

/// Concatenation of 2-D views along axis 0 (rows) or 1 (columns).
inline Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw Error("concat: no inputs");
  if (axis != 0 && axis != 1) throw Error("concat: axis must be 0 or 1");
  Graph& g0 = parts[0].graph();
  std::vector<std::size_t> ids;
  std::size_t rows = 0, cols = 0;
  for (const auto& p : parts) {
    detail::require_same_graph(parts[0], p);
    ids.push_back(p.id());
    if (axis == 0) {
      if (p.cols() != parts[0].cols())
        throw ShapeError("concat(axis=0): shape mismatch between " + detail::pair_str(parts[0], p));
      rows += p.rows();
      cols = p.cols();
    } else {
      if (p.rows() != parts[0].rows())
        throw ShapeError("concat(axis=1): shape mismatch between " + detail::pair_str(parts[0], p));
      cols += p.cols();
      rows = p.rows();
    }
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  if (axis == 0) {
    for (const auto& p : parts) out.insert(out.end(), p.value().begin(), p.value().end());
  } else {
    out.resize(rows * cols);
    std::size_t off = 0;
    for (const auto& p : parts) {
      const auto& v = p.value();
      const std::size_t pc = p.cols();
      for (std::size_t r = 0; r < rows; ++r)
        std::copy(v.begin() + r * pc, v.begin() + (r + 1) * pc, out.begin() + r * cols + off);
      off += pc;
    }
  }
  return g0.push(OpKind::Concat, detail::matrix_shape(rows, cols), std::move(out), ids,
                 [=](Graph& g, std::size_t self) {
                   const auto& dc = g.node(self).grad;
                   std::size_t off = 0;
                   for (std::size_t id : ids) {
                     const std::size_t n = g.node(id).value().size();
                     const std::size_t pc = g.node(id).cols();
                     if (g.needs_grad(id)) {
                       auto& d = g.grad_buffer(id);
                       if (axis == 0) {
                         for (std::size_t i = 0; i < n; ++i) d[i] += dc[off + i];
                       } else {
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t c = 0; c < pc; ++c) d[r * pc + c] += dc[r * cols + off + c];
                       }
                     }
                     off += axis == 0 ? n : pc;
                   }
                 });
}

inline Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

/// Rectangular window [r0, r1) x [c0, c1) of a 2-D view.
inline Var slice(Var a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  const std::size_t rows = a.rows(), cols = a.cols();
  if (r0 >= r1 || c0 >= c1 || r1 > rows || c1 > cols)
    throw ShapeError("slice [" + std::to_string(r0) + ":" + std::to_string(r1) + ", " +
                     std::to_string(c0) + ":" + std::to_string(c1) + "] out of range for shape " +
                     shape_str(a.shape()));
  const std::size_t nr = r1 - r0, nc = c1 - c0;
  std::vector<double> out(nr * nc);
  const auto& v = a.value();
  for (std::size_t r = 0; r < nr; ++r)
    std::copy(v.begin() + (r0 + r) * cols + c0, v.begin() + (r0 + r) * cols + c1, out.begin() + r * nc);
  const std::size_t ia = a.id();
  return a.graph().push(OpKind::Slice, detail::matrix_shape(nr, nc), std::move(out), {ia},
                        [=](Graph& g, std::size_t self) {
                          const auto& dc = g.node(self).grad;
                          auto& d = g.grad_buffer(ia);
                          for (std::size_t r = 0; r < nr; ++r)
                            for (std::size_t c = 0; c < nc; ++c)
                              d[(r0 + r) * cols + c0 + c] += dc[r * nc + c];
                        });
}

inline Var slice_rows(Var a, std::size_t r0, std::size_t r1) { return slice(a, r0, r1, 0, a.cols()); }
inline Var slice_cols(Var a, std::size_t c0, std::size_t c1) { return slice(a, 0, a.rows(), c0, c1); }

/// Row gather; repeated indices accumulate in backward (embedding lookup).
inline Var gather_rows(Var a, std::vector<std::size_t> indices) {
  const std::size_t rows = a.rows(), cols = a.cols();
  if (indices.empty()) throw ShapeError("gather_rows: empty index list");
  std::vector<double> out(indices.size() * cols);
  const auto& v = a.value();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows)
      throw ShapeError("gather_rows: index " + std::to_string(indices[i]) +
                       " out of range for shape " + shape_str(a.shape()));
    std::copy(v.begin() + indices[i] * cols, v.begin() + (indices[i] + 1) * cols, out.begin() + i * cols);
  }
  const std::size_t ia = a.id();
  const std::size_t n = indices.size();
  return a.graph().push(OpKind::GatherRows, detail::matrix_shape(n, cols), std::move(out), {ia},
                        [=, idx = std::move(indices)](Graph& g, std::size_t self) {
                          const auto& dc = g.node(self).grad;
                          auto& d = g.grad_buffer(ia);
                          for (std::size_t i = 0; i < idx.size(); ++i)
                            for (std::size_t c = 0; c < cols; ++c) d[idx[i] * cols + c] += dc[i * cols + c];
                        });
}

// ---------------------------------------------------------------------------
// Reductions

/// Mean over axis 0 (result [1, cols]) or axis 1 (result [rows, 1]).
inline Var mean(Var a, int axis) {
  const std::size_t rows = a.rows(), cols = a.cols();
  const auto& v = a.value();
  std::vector<double> out;
  Shape shape;
  if (axis == 0) {
    out.assign(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[c] += v[r * cols + c];
    for (auto& o : out) o /= static_cast<double>(rows);
    shape = {1, cols};
  } else if (axis == 1) {
    out.assign(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += v[r * cols + c];
      out[r] = s / static_cast<double>(cols);
    }
    shape = {rows, 1};
  } else {
    throw Error("mean: axis must be 0 or 1");
  }
  const std::size_t ia = a.id();
  return a.graph().push(OpKind::Mean, shape, std::move(out), {ia}, [=](Graph& g, std::size_t self) {
    const auto& dc = g.node(self).grad;
    auto& d = g.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        d[r * cols + c] += axis == 0 ? dc[c] / static_cast<double>(rows) : dc[r] / static_cast<double>(cols);
  });
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  const std::size_t ia = a.id();
  return a.graph().push(OpKind::Sum, Shape{1}, {s}, {ia}, [=](Graph& g, std::size_t self) {
    const double dc = g.node(self).grad[0];
    for (auto& d : g.grad_buffer(ia)) d += dc;
  });
}

/// Column-wise max over consecutive groups of `group` rows: [rows, c] -> [rows/group, c].
inline Var max_pool_rows(Var a, std::size_t group) {
  const std::size_t rows = a.rows(), cols = a.cols();
  if (group == 0 || rows % group != 0)
    throw ShapeError("max_pool_rows: group " + std::to_string(group) + " does not divide shape " +
                     shape_str(a.shape()));
  const std::size_t out_rows = rows / group;
  const auto& v = a.value();
  std::vector<double> out(out_rows * cols);
  std::vector<std::size_t> argmax(out_rows * cols);
  for (std::size_t o = 0; o < out_rows; ++o)
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t best = o * group;
      for (std::size_t r = o * group + 1; r < (o + 1) * group; ++r)
        if (v[r * cols + c] > v[best * cols + c]) best = r;
      out[o * cols + c] = v[best * cols + c];
      argmax[o * cols + c] = best;
    }
  const std::size_t ia = a.id();
  return a.graph().push(OpKind::MaxPoolRows, detail::matrix_shape(out_rows, cols), std::move(out), {ia},
                        [=, am = std::move(argmax)](Graph& g, std::size_t self) {
                          const auto& dc = g.node(self).grad;
                          auto& d = g.grad_buffer(ia);
                          for (std::size_t i = 0; i < am.size(); ++i) d[am[i] * cols + i % cols] += dc[i];
                        });
}

// ---------------------------------------------------------------------------
// Row-wise nonlinearities (last axis)

inline Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
  detail::require_same_graph(x, gain);
  detail::require_same_graph(x, bias);
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gain.size() != cols || bias.size() != cols)
    throw ShapeError("layer_norm: shape mismatch between " + detail::pair_str(x, gain) + " / " +
                     shape_str(bias.shape()));
  const auto& v = x.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  std::vector<double> out(v.size()), xhat(v.size()), rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v.data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += row[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(cols);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (row[c] - mu) * rstd[r];
      xhat[r * cols + c] = h;
      out[r * cols + c] = h * gv[c] + bv[c];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.graph().push(
      OpKind::LayerNorm, x.shape(), std::move(out), {ix, ig, ib},
      [=, xhat = std::move(xhat), rstd = std::move(rstd)](Graph& g, std::size_t self) {
        const auto& dy = g.node(self).grad;
        if (g.needs_grad(ig)) {
          auto& dg = g.grad_buffer(ig);
          for (std::size_t i = 0; i < dy.size(); ++i) dg[i % cols] += dy[i] * xhat[i];
        }
        if (g.needs_grad(ib)) {
          auto& db = g.grad_buffer(ib);
          for (std::size_t i = 0; i < dy.size(); ++i) db[i % cols] += dy[i];
        }
        if (g.needs_grad(ix)) {
          const auto& gv2 = g.node(ig).value();
          auto& dx = g.grad_buffer(ix);
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double dh = dy[r * cols + c] * gv2[c];
              m1 += dh;
              m2 += dh * xhat[r * cols + c];
            }
            m1 /= static_cast<double>(cols);
            m2 /= static_cast<double>(cols);
            for (std::size_t c = 0; c < cols; ++c) {
              const double dh = dy[r * cols + c] * gv2[c];
              dx[r * cols + c] += rstd[r] * (dh - m1 - xhat[r * cols + c] * m2);
            }
          }
        }
      });
}

/// Exact (erf-based) GELU.
inline Var gelu(Var a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  std::vector<double> out(a.value());
  for (auto& v : out) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  const std::size_t ia = a.id();
  return a.graph().push(OpKind::Gelu, a.shape(), std::move(out), {ia}, [=](Graph& g, std::size_t self) {
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    const auto& dc = g.node(self).grad;
    const auto& x = g.node(ia).value();
    auto& d = g.grad_buffer(ia);
    for (std::size_t i = 0; i < dc.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
      d[i] += dc[i] * (cdf + x[i] * pdf);
    }
  });
}

inline Var softmax(Var a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  if (cols == 0 || a.size() == 0) throw ShapeError("softmax over an empty axis");
  std::vector<double> out(a.value());
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      s += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= s;
  }
  const std::size_t ia = a.id();
  return a.graph().push(OpKind::Softmax, a.shape(), std::move(out), {ia}, [=](Graph& g, std::size_t self) {
    const auto& dc = g.node(self).grad;
    const auto& y = g.node(self).value();
    auto& d = g.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += dc[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] += y[r * cols + c] * (dc[r * cols + c] - dot);
    }
  });
}

inline Var log_softmax(Var a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  if (cols == 0 || a.size() == 0) throw ShapeError("log_softmax over an empty axis");
  std::vector<double> out(a.value());
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(row[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) row[c] -= lse;
  }
  const std::size_t ia = a.id();
  return a.graph().push(OpKind::LogSoftmax, a.shape(), std::move(out), {ia},
                        [=](Graph& g, std::size_t self) {
                          const auto& dc = g.node(self).grad;
                          const auto& y = g.node(self).value();
                          auto& d = g.grad_buffer(ia);
                          for (std::size_t r = 0; r < rows; ++r) {
                            double s = 0.0;
                            for (std::size_t c = 0; c < cols; ++c) s += dc[r * cols + c];
                            for (std::size_t c = 0; c < cols; ++c)
                              d[r * cols + c] += dc[r * cols + c] - std::exp(y[r * cols + c]) * s;
                          }
                        });
}

/// Natural log. Values below `floor` are clamped (and counted on the graph);
/// with floor == 0 a non-positive input is an error.
inline Var log(Var a, double floor = 0.0) {
  std::vector<double> out(a.value());
  std::vector<char> clamped(out.size(), 0);
  std::size_t n_clamped = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (floor > 0.0 && out[i] < floor) {
      out[i] = floor;
      clamped[i] = 1;
      ++n_clamped;
    } else if (out[i] <= 0.0) {
      throw Error("log of non-positive value " + std::to_string(out[i]));
    }
    out[i] = std::log(out[i]);
  }
  a.graph().note_clamps(n_clamped);
  const std::size_t ia = a.id();
  return a.graph().push(OpKind::Log, a.shape(), std::move(out), {ia},
                        [=, clamped = std::move(clamped)](Graph& g, std::size_t self) {
                          const auto& dc = g.node(self).grad;
                          const auto& x = g.node(ia).value();
                          auto& d = g.grad_buffer(ia);
                          for (std::size_t i = 0; i < dc.size(); ++i)
                            if (!clamped[i]) d[i] += dc[i] / x[i];
                        });
}

inline Var abs(Var a) {
  std::vector<double> out(a.value());
  for (auto& v : out) v = std::fabs(v);
  const std::size_t ia = a.id();
  return a.graph().push(OpKind::Abs, a.shape(), std::move(out), {ia}, [=](Graph& g, std::size_t self) {
    const auto& dc = g.node(self).grad;
    const auto& x = g.node(ia).value();
    auto& d = g.grad_buffer(ia);
    for (std::size_t i = 0; i < dc.size(); ++i) d[i] += x[i] > 0.0 ? dc[i] : (x[i] < 0.0 ? -dc[i] : 0.0);
  });
}

/// Scales every row to unit Euclidean norm; a zero row is an error.
inline Var l2_normalize(Var a) {
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<double> out(a.value());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += out[r * cols + c] * out[r * cols + c];
    norms[r] = std::sqrt(s);
    if (!(norms[r] > 0.0)) throw Error("l2_normalize: row " + std::to_string(r) + " has zero norm");
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= norms[r];
  }
  const std::size_t ia = a.id();
  return a.graph().push(OpKind::L2Normalize, a.shape(), std::move(out), {ia},
                        [=, norms = std::move(norms)](Graph& g, std::size_t self) {
                          const auto& dc = g.node(self).grad;
                          const auto& y = g.node(self).value();
                          auto& d = g.grad_buffer(ia);
                          for (std::size_t r = 0; r < rows; ++r) {
                            double dot = 0.0;
                            for (std::size_t c = 0; c < cols; ++c) dot += dc[r * cols + c] * y[r * cols + c];
                            for (std::size_t c = 0; c < cols; ++c)
                              d[r * cols + c] += (dc[r * cols + c] - y[r * cols + c] * dot) / norms[r];
                          }
                        });
}

}  // namespace rpt
