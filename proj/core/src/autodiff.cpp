// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mflow/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mflow {

// ---- Var / Graph -------------------------------------------------------

const Tensor& Var::value() const { return *graph_->nodes_[id_].value; }

const Tensor* Var::tangent() const {
  const auto& t = graph_->nodes_[id_].tangent;
  return t ? &*t : nullptr;
}

Tensor Var::tangent_or_zero() const {
  const Tensor* t = tangent();
  return t ? *t : Tensor(value().shape());
}

bool Var::requires_grad() const { return graph_->nodes_[id_].requires_grad; }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value, std::optional<Tensor> tangent) {
  if (tangent && tangent->shape() != value.shape()) {
    throw ShapeError("tangent shape " + shape_str(tangent->shape()) +
                     " does not match primal shape " + shape_str(value.shape()));
  }
  Node n;
  n.value = std::make_shared<const Tensor>(std::move(value));
  n.tangent = std::move(tangent);
  return push(std::move(n));
}

Var Graph::parameter(const Tensor& value) {
  Node n;
  n.value = std::shared_ptr<const Tensor>(std::shared_ptr<const Tensor>{}, &value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::frozen(const Tensor& value) {
  Node n;
  n.value = std::shared_ptr<const Tensor>(std::shared_ptr<const Tensor>{}, &value);
  return push(std::move(n));
}

Var Graph::record(Tensor value, std::optional<Tensor> tangent, std::span<const Var> parents,
                  BackwardFn backward) {
  Node n;
  n.value = std::make_shared<const Tensor>(std::move(value));
  n.tangent = std::move(tangent);
  n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                [](const Var& p) { return p.requires_grad(); });
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Graph::accumulate(std::size_t id, Tensor g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (g.shape() != n.value->shape()) {
    throw ShapeError("gradient shape " + shape_str(g.shape()) + " vs value shape " +
                     shape_str(n.value->shape()));
  }
  if (!n.grad) {
    n.grad = std::move(g);
    return;
  }
  auto dst = n.grad->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Graph::backward(const Var& loss) {
  if (loss.value().numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got " + shape_str(loss.shape()));
  }
  for (Node& n : nodes_) n.grad.reset();
  if (!loss.requires_grad()) return;
  nodes_[loss.id()].grad = Tensor::ones(loss.shape());
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad || !n.backward) continue;
    // Callbacks only accumulate into parents, whose indices are < i.
    n.backward(*this, *n.grad);
  }
}

Tensor Graph::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  return n.grad ? *n.grad : Tensor(n.value->shape());
}

bool Graph::has_grad(const Var& v) const { return nodes_[v.id()].grad.has_value(); }

// ---- helpers -----------------------------------------------------------

namespace {

/// Index stride mapping for trailing-singleton broadcasting. `block == 1` means
/// the operand has the output shape; otherwise element i reads index i / block.
struct Broadcast {
  Shape out;
  std::size_t block_a = 1;
  std::size_t block_b = 1;
};

// Block size when `small` broadcasts to `big`, or 0 when it cannot.
std::size_t trailing_block(const Shape& small, const Shape& big) {
  if (small.size() != big.size()) return 0;
  std::size_t k = small.size();
  while (k > 0 && small[k - 1] == 1) --k;
  for (std::size_t i = 0; i < k; ++i)
    if (small[i] != big[i]) return 0;
  std::size_t block = 1;
  for (std::size_t i = k; i < big.size(); ++i) block *= big[i];
  return block;
}

Broadcast broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return {a, 1, 1};
  if (std::size_t blk = trailing_block(b, a)) return {a, 1, blk};
  if (std::size_t blk = trailing_block(a, b)) return {b, blk, 1};
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                   shape_str(b));
}

// Sum a full-shape gradient down to an operand broadcast with `block`.
Tensor reduce_to(const Tensor& g, const Shape& target, std::size_t block) {
  if (block == 1) return g;
  Tensor out(target);
  auto o = out.data();
  auto s = g.data();
  for (std::size_t i = 0; i < s.size(); ++i) o[i / block] += s[i];
  return out;
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(x[i]);
  return out;
}

template <typename F>
Tensor zip_b(const Tensor& a, const Tensor& b, const Broadcast& bc, F f) {
  Tensor out(bc.out);
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(x[i / bc.block_a], y[i / bc.block_b]);
  return out;
}

// Tangent of a unary elementwise op: t_out = t_in * deriv(x).
template <typename D>
std::optional<Tensor> unary_tangent(const Var& a, D deriv) {
  const Tensor* t = a.tangent();
  if (!t) return std::nullopt;
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.value().data();
  auto tv = t->data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = tv[i] * deriv(x[i]);
  return out;
}

template <typename D>
Var unary(const Var& a, Tensor value, D deriv) {
  auto tangent = unary_tangent(a, deriv);
  const Var parents[] = {a};
  return a.graph().record(std::move(value), std::move(tangent), parents,
                          [id = a.id(), deriv](Graph& g, const Tensor& gout) {
                            const Tensor& x = g.value(id);
                            Tensor gin(x.shape());
                            auto o = gin.data();
                            auto xv = x.data();
                            auto gv = gout.data();
                            for (std::size_t i = 0; i < o.size(); ++i) o[i] = gv[i] * deriv(xv[i]);
                            g.accumulate(id, gin);
                          });
}

void same_graph(const Var& a, const Var& b) {
  if (&a.graph() != &b.graph()) throw std::logic_error("operands belong to different graphs");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

const Tensor& Graph::value(std::size_t id) const { return *nodes_[id].value; }

// ---- elementwise -------------------------------------------------------

Var add(const Var& a, const Var& b) {
  same_graph(a, b);
  const Broadcast bc = broadcast(a.shape(), b.shape(), "add");
  Tensor value = zip_b(a.value(), b.value(), bc, [](double x, double y) { return x + y; });
  std::optional<Tensor> tangent;
  if (a.tangent() || b.tangent()) {
    tangent = zip_b(a.tangent_or_zero(), b.tangent_or_zero(), bc,
                    [](double x, double y) { return x + y; });
  }
  const Var parents[] = {a, b};
  return a.graph().record(
      std::move(value), std::move(tangent), parents,
      [ia = a.id(), ib = b.id(), sa = a.shape(), sb = b.shape(), bc](Graph& g,
                                                                     const Tensor& gout) {
        g.accumulate(ia, reduce_to(gout, sa, bc.block_a));
        g.accumulate(ib, reduce_to(gout, sb, bc.block_b));
      });
}

Var sub(const Var& a, const Var& b) {
  same_graph(a, b);
  const Broadcast bc = broadcast(a.shape(), b.shape(), "sub");
  Tensor value = zip_b(a.value(), b.value(), bc, [](double x, double y) { return x - y; });
  std::optional<Tensor> tangent;
  if (a.tangent() || b.tangent()) {
    tangent = zip_b(a.tangent_or_zero(), b.tangent_or_zero(), bc,
                    [](double x, double y) { return x - y; });
  }
  const Var parents[] = {a, b};
  return a.graph().record(
      std::move(value), std::move(tangent), parents,
      [ia = a.id(), ib = b.id(), sa = a.shape(), sb = b.shape(), bc](Graph& g,
                                                                     const Tensor& gout) {
        g.accumulate(ia, reduce_to(gout, sa, bc.block_a));
        g.accumulate(ib, reduce_to(-1.0 * gout, sb, bc.block_b));
      });
}

Var mul(const Var& a, const Var& b) {
  same_graph(a, b);
  const Broadcast bc = broadcast(a.shape(), b.shape(), "mul");
  Tensor value = zip_b(a.value(), b.value(), bc, [](double x, double y) { return x * y; });
  std::optional<Tensor> tangent;
  if (a.tangent() || b.tangent()) {
    Tensor t(bc.out);
    if (const Tensor* ta = a.tangent()) {
      t = zip_b(*ta, b.value(), bc, [](double x, double y) { return x * y; });
    }
    if (const Tensor* tb = b.tangent()) {
      Tensor tb_part = zip_b(a.value(), *tb, bc, [](double x, double y) { return x * y; });
      t = t + tb_part;
    }
    tangent = std::move(t);
  }
  const Var parents[] = {a, b};
  return a.graph().record(
      std::move(value), std::move(tangent), parents,
      [ia = a.id(), ib = b.id(), sa = a.shape(), sb = b.shape(), bc](Graph& g,
                                                                     const Tensor& gout) {
        const Tensor& av = g.value(ia);
        const Tensor& bv = g.value(ib);
        const Broadcast gb{bc.out, 1, bc.block_b};
        const Broadcast ga{bc.out, 1, bc.block_a};
        g.accumulate(ia, reduce_to(zip_b(gout, bv, gb, [](double x, double y) { return x * y; }),
                                   sa, bc.block_a));
        g.accumulate(ib, reduce_to(zip_b(gout, av, ga, [](double x, double y) { return x * y; }),
                                   sb, bc.block_b));
      });
}

Var scale(const Var& a, double k) {
  Tensor value = k * a.value();
  std::optional<Tensor> tangent;
  if (const Tensor* t = a.tangent()) tangent = k * *t;
  const Var parents[] = {a};
  return a.graph().record(std::move(value), std::move(tangent), parents,
                          [id = a.id(), k](Graph& g, const Tensor& gout) {
                            g.accumulate(id, k * gout);
                          });
}

Var add_scalar(const Var& a, double k) {
  Tensor value = map(a.value(), [k](double x) { return x + k; });
  std::optional<Tensor> tangent;
  if (const Tensor* t = a.tangent()) tangent = *t;
  const Var parents[] = {a};
  return a.graph().record(std::move(value), std::move(tangent), parents,
                          [id = a.id()](Graph& g, const Tensor& gout) { g.accumulate(id, gout); });
}

Var neg(const Var& a) { return scale(a, -1.0); }

// ---- linear algebra ----------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: shape mismatch " + shape_str(av.shape()) + " vs " +
                     shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor value = mflow::matmul(av, bv);
  std::optional<Tensor> tangent;
  if (a.tangent() || b.tangent()) {
    Tensor t({m, n});
    if (const Tensor* ta = a.tangent()) t = mflow::matmul(*ta, bv);
    if (const Tensor* tb = b.tangent()) t = t + mflow::matmul(av, *tb);
    tangent = std::move(t);
  }
  const Var parents[] = {a, b};
  return a.graph().record(
      std::move(value), std::move(tangent), parents,
      [ia = a.id(), ib = b.id(), ra = a.requires_grad(), rb = b.requires_grad(), m, k,
       n](Graph& g, const Tensor& gout) {
        const Tensor& av = g.value(ia);
        const Tensor& bv = g.value(ib);
        if (ra) {
          Tensor ga({m, k});
          kernels::matmul_nt_acc(gout.data(), bv.data(), ga.data(), m, k, n);
          g.accumulate(ia, ga);
        }
        if (rb) {
          Tensor gb({k, n});
          kernels::matmul_tn_acc(av.data(), gout.data(), gb.data(), m, k, n);
          g.accumulate(ib, gb);
        }
      });
}

Var add_bias(const Var& x, const Var& bias) {
  same_graph(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
    throw ShapeError("add_bias: shape mismatch " + shape_str(xv.shape()) + " vs " +
                     shape_str(bv.shape()));
  }
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  auto row_add = [m, n](const Tensor& base, const Tensor& row) {
    Tensor out = base;
    auto o = out.data();
    auto r = row.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) o[i * n + j] += r[j];
    return out;
  };
  Tensor value = row_add(xv, bv);
  std::optional<Tensor> tangent;
  if (x.tangent() || bias.tangent()) {
    tangent = row_add(x.tangent_or_zero(), bias.tangent_or_zero());
  }
  const Var parents[] = {x, bias};
  return x.graph().record(std::move(value), std::move(tangent), parents,
                          [ix = x.id(), ib = bias.id(), m, n](Graph& g, const Tensor& gout) {
                            g.accumulate(ix, gout);
                            Tensor gb({n});
                            auto o = gb.data();
                            auto s = gout.data();
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) o[j] += s[i * n + j];
                            g.accumulate(ib, gb);
                          });
}

// ---- reductions and reshaping -------------------------------------------

Var sum(const Var& a) {
  Tensor value = Tensor::scalar(mflow::sum(a.value()));
  std::optional<Tensor> tangent;
  if (const Tensor* t = a.tangent()) tangent = Tensor::scalar(mflow::sum(*t));
  const Var parents[] = {a};
  return a.graph().record(std::move(value), std::move(tangent), parents,
                          [id = a.id(), shape = a.shape()](Graph& g, const Tensor& gout) {
                            g.accumulate(id, Tensor::full(shape, gout.item()));
                          });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().numel();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var row_sum(const Var& a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) throw ShapeError("row_sum needs rank 2, got " + shape_str(av.shape()));
  const std::size_t m = av.dim(0), n = av.dim(1);
  auto reduce = [m, n](const Tensor& x) {
    Tensor out({m, 1});
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += x[i * n + j];
      out[i] = acc;
    }
    return out;
  };
  std::optional<Tensor> tangent;
  if (const Tensor* t = a.tangent()) tangent = reduce(*t);
  const Var parents[] = {a};
  return a.graph().record(reduce(av), std::move(tangent), parents,
                          [id = a.id(), m, n](Graph& g, const Tensor& gout) {
                            Tensor gin({m, n});
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) gin[i * n + j] = gout[i];
                            g.accumulate(id, gin);
                          });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw ShapeError("concat axis " + std::to_string(axis) + " out of range for " +
                     shape_str(first));
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> inner;
  bool any_tangent = false;
  for (const Var& p : parts) {
    same_graph(parts.front(), p);
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      if (i != axis && s[i] != first[i]) ok = false;
    if (!ok) {
      throw ShapeError("concat: shape mismatch " + shape_str(first) + " vs " + shape_str(s));
    }
    out_shape[axis] += s[axis];
    std::size_t in = 1;
    for (std::size_t i = axis; i < s.size(); ++i) in *= s[i];
    inner.push_back(in);
    any_tangent = any_tangent || p.tangent();
  }
  const std::size_t row = shape_numel(out_shape) / std::max<std::size_t>(outer, 1);
  auto gather = [&](auto get) {
    Tensor out(out_shape);
    auto o = out.data();
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const Tensor& src = get(parts[k]);
      auto sv = src.data();
      for (std::size_t r = 0; r < outer; ++r)
        std::copy_n(sv.begin() + static_cast<std::ptrdiff_t>(r * inner[k]), inner[k],
                    o.begin() + static_cast<std::ptrdiff_t>(r * row + off));
      off += inner[k];
    }
    return out;
  };
  Tensor value = gather([](const Var& v) -> const Tensor& { return v.value(); });
  std::optional<Tensor> tangent;
  if (any_tangent) {
    std::vector<Tensor> tangents;
    tangents.reserve(parts.size());
    for (const Var& p : parts) tangents.push_back(p.tangent_or_zero());
    std::size_t idx = 0;
    tangent = gather([&](const Var&) -> const Tensor& { return tangents[idx++]; });
  }
  std::vector<std::size_t> ids;
  std::vector<Shape> shapes;
  for (const Var& p : parts) {
    ids.push_back(p.id());
    shapes.push_back(p.shape());
  }
  return parts.front().graph().record(
      std::move(value), std::move(tangent), parts,
      [ids, shapes, inner, outer, row](Graph& g, const Tensor& gout) {
        std::size_t off = 0;
        auto gv = gout.data();
        for (std::size_t k = 0; k < ids.size(); ++k) {
          Tensor part(shapes[k]);
          auto pv = part.data();
          for (std::size_t r = 0; r < outer; ++r)
            std::copy_n(gv.begin() + static_cast<std::ptrdiff_t>(r * row + off), inner[k],
                        pv.begin() + static_cast<std::ptrdiff_t>(r * inner[k]));
          off += inner[k];
          g.accumulate(ids[k], part);
        }
      });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

// ---- nonlinearities ----------------------------------------------------

Var silu(const Var& a) {
  Tensor value = map(a.value(), [](double x) { return x * sigmoid(x); });
  return unary(a, std::move(value), [](double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
  });
}

Var sin(const Var& a) {
  return unary(a, map(a.value(), [](double x) { return std::sin(x); }),
               [](double x) { return std::cos(x); });
}

Var cos(const Var& a) {
  return unary(a, map(a.value(), [](double x) { return std::cos(x); }),
               [](double x) { return -std::sin(x); });
}

Var sqrt(const Var& a) {
  return unary(a, map(a.value(), [](double x) { return std::sqrt(x); }),
               [](double x) { return 0.5 / std::sqrt(x); });
}

Var square(const Var& a) {
  return unary(a, map(a.value(), [](double x) { return x * x; }),
               [](double x) { return 2.0 * x; });
}

// ---- lookup and control ------------------------------------------------

Var embedding(const Var& table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw ShapeError("embedding table must be rank 2, got " + shape_str(tv.shape()));
  const std::size_t rows = tv.dim(0), width = tv.dim(1);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= rows) {
      throw std::out_of_range("unknown condition id " + std::to_string(id) + " (table has " +
                              std::to_string(rows) + " rows)");
    }
  }
  std::vector<int> idv(ids.begin(), ids.end());
  auto gather = [&idv, width](const Tensor& src) {
    Tensor out({idv.size(), width});
    for (std::size_t i = 0; i < idv.size(); ++i)
      std::copy_n(src.data().begin() + static_cast<std::ptrdiff_t>(idv[i] * width), width,
                  out.data().begin() + static_cast<std::ptrdiff_t>(i * width));
    return out;
  };
  std::optional<Tensor> tangent;
  if (const Tensor* t = table.tangent()) tangent = gather(*t);
  const Var parents[] = {table};
  return table.graph().record(gather(tv), std::move(tangent), parents,
                              [id = table.id(), idv, rows, width](Graph& g, const Tensor& gout) {
                                Tensor gt({rows, width});
                                for (std::size_t i = 0; i < idv.size(); ++i)
                                  for (std::size_t j = 0; j < width; ++j)
                                    gt[idv[i] * width + j] += gout[i * width + j];
                                g.accumulate(id, gt);
                              });
}

Var stop_gradient(const Var& a) {
  // No parents recorded: gradients cannot cross, and the tangent is zero.
  return a.graph().record(a.value(), std::nullopt, {}, {});
}

Var floor(const Var& a) {
  if (a.tangent()) throw NonDifferentiableError("floor has no derivative; tangent reached it");
  return a.graph().record(map(a.value(), [](double x) { return std::floor(x); }), std::nullopt,
                          {}, {});
}

// ---- drivers -----------------------------------------------------------

JvpResult jvp(const TracedFn& f, std::span<const Tensor> inputs,
              std::span<const Tensor> tangents) {
  if (inputs.size() != tangents.size()) {
    throw std::invalid_argument("jvp: " + std::to_string(inputs.size()) + " inputs but " +
                                std::to_string(tangents.size()) + " tangents");
  }
  Graph g;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(g.constant(inputs[i], tangents[i]));
  Var out = f(g, vars);
  return {out.value(), out.tangent_or_zero()};
}

std::vector<Tensor> gradient(const TracedFn& f, std::span<const Tensor> inputs) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(g.parameter(t));
  Var out = f(g, vars);
  g.backward(out);
  std::vector<Tensor> grads;
  grads.reserve(vars.size());
  for (const Var& v : vars) grads.push_back(g.grad(v));
  return grads;
}

}  // namespace mflow
