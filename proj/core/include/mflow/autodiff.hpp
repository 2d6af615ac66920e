// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mflow/tensor.hpp"

namespace mflow {

/// Raised while tracing when a tangent reaches an op with no derivative.
class NonDifferentiableError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
///
/// Every node carries a primal value and, when any ancestor was seeded with
/// one, a forward-mode tangent (the dual part). A node without a tangent has a
/// zero tangent.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Forward-mode tangent, or nullptr when it is identically zero.
  const Tensor* tangent() const;
  /// Tangent materialized as a tensor (zeros when absent).
  Tensor tangent_or_zero() const;
  bool requires_grad() const;

  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Operation record for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, which is a topological order, so
/// `backward` walks indices downward and visits each node once. Gradient
/// buffers are only allocated for nodes on a path to a trainable leaf.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Non-trainable input, optionally seeded with a tangent for jvp.
  Var constant(Tensor value, std::optional<Tensor> tangent = std::nullopt);
  /// Trainable leaf that borrows `value`; the tensor must outlive the graph.
  Var parameter(const Tensor& value);
  /// Non-trainable leaf that borrows `value` (frozen weights).
  Var frozen(const Tensor& value);

  /// Records a derived node. Used by the op library.
  Var record(Tensor value, std::optional<Tensor> tangent, std::span<const Var> parents,
             BackwardFn backward);

  void backward(const Var& loss);
  /// Gradient of the last `backward` w.r.t. `v`; zeros if nothing reached it.
  Tensor grad(const Var& v) const;
  bool has_grad(const Var& v) const;

  /// Adds into the gradient buffer of node `id` (op backward helpers).
  void accumulate(std::size_t id, Tensor g);
  void accumulate(const Var& v, Tensor g) { accumulate(v.id(), std::move(g)); }

  const Tensor& value(std::size_t id) const;
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  friend class Var;

  struct Node {
    std::shared_ptr<const Tensor> value;
    std::optional<Tensor> tangent;
    bool requires_grad = false;
    BackwardFn backward;
    std::optional<Tensor> grad;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
};

// ---- op library --------------------------------------------------------
//
// Binary elementwise ops accept equal shapes, or operands of equal rank where
// one side is 1 on a trailing run of axes (e.g. [B,1] against [B,D]).

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double k);
Var add_scalar(const Var& a, double k);
Var neg(const Var& a);

/// a[m,k] @ b[k,n]
Var matmul(const Var& a, const Var& b);
/// x[m,n] + bias[n], bias broadcast over rows.
Var add_bias(const Var& x, const Var& bias);

Var sum(const Var& a);        // -> scalar
Var mean(const Var& a);       // -> scalar
Var row_sum(const Var& a);    // [B,D] -> [B,1]
Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(std::initializer_list<Var> parts, std::size_t axis);

Var silu(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);

/// Row lookup: table[K,E], ids -> [len(ids),E].
Var embedding(const Var& table, std::span<const int> ids);

/// Value-identical node that blocks both gradients and tangents.
Var stop_gradient(const Var& a);
/// Piecewise constant; zero gradient, raises if a tangent reaches it.
Var floor(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double k, const Var& a) { return scale(a, k); }
inline Var operator*(const Var& a, double k) { return scale(a, k); }
inline Var operator-(const Var& a) { return neg(a); }

// ---- forward mode ------------------------------------------------------

using TracedFn = std::function<Var(Graph&, std::span<const Var>)>;

struct JvpResult {
  Tensor value;
  Tensor tangent;
};

/// (f(x), J_f(x) v) in one forward pass by tangent propagation.
JvpResult jvp(const TracedFn& f, std::span<const Tensor> inputs,
              std::span<const Tensor> tangents);

/// Gradients of a scalar-valued f w.r.t. each input.
std::vector<Tensor> gradient(const TracedFn& f, std::span<const Tensor> inputs);

}  // namespace mflow
