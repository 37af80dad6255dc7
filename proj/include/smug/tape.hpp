#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "smug/tensor.hpp"

namespace smug::ad {

using NodeId = int32_t;

class Tape;

// Lightweight handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  NodeId id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
};

// Linear map with a user-supplied adjoint. Adjoint correctness
// (Re<Lu, v> = Re<u, L*v>) is checked by randomized dot-product tests.
struct LinearOp {
  std::function<Tensor(const Tensor&)> apply;
  std::function<Tensor(const Tensor&)> adjoint;
};

// Reverse-mode tape. Nodes are recorded in topological (creation) order;
// backward() visits each node exactly once, in reverse order. Single-threaded
// use per tape; independent tapes may run in parallel.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& upstream)>;

  // Leaf with gradient tracking (parameters, attack inputs).
  Var leaf(Tensor value);
  // Constant without gradient tracking (data, noise draws).
  Var constant(Tensor value);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool requires_grad(NodeId id) const {
    return nodes_[static_cast<size_t>(id)].requires_grad;
  }

  // Reverse pass from a scalar loss. Accumulators are zeroed first; every
  // node that tracks gradients ends up with a materialized gradient tensor
  // (zeros when the loss does not depend on it).
  void backward(const Var& loss);

  const Tensor& grad(const Var& v) const;

  size_t node_count() const { return nodes_.size(); }

  // --- op implementation interface ---
  Var make_node(Tensor value, std::initializer_list<NodeId> inputs, BackwardFn bw);
  void accumulate(NodeId id, const Tensor& contribution);
  void accumulate_scaled(NodeId id, double a, const Tensor& x);  // grad += a*x
  Tensor& grad_slot(NodeId id);  // zero-initialized on first access

 private:
  struct Node {
    Tensor value;
    BackwardFn backward;  // empty for leaves/constants and no-grad nodes
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool grads_valid_ = false;
};

inline const Tensor& Var::value() const { return tape->value(id); }

// Elementwise arithmetic (same-shape operands).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);

// max(0, x); the subgradient at exactly 0 is taken as 0.
Var relu(const Var& a);

// Cross-correlation with per-channel bias: input [C_in,H,W],
// kernel [C_out,C_in,k,k] (k odd), bias [C_out], zero same-padding, stride 1.
Var conv2d(const Var& input, const Var& kernel, const Var& bias);

// Reductions to a rank-0 scalar.
Var sum(const Var& a);
Var sum_squares(const Var& a);

// Linear operator node; backward applies the adjoint to the upstream
// gradient. Throws at registration when no adjoint is supplied.
Var apply_linear(const Var& x, LinearOp op);

// Sum / mean of equally-shaped vars with a fixed pairwise reduction order.
Var sum_pairwise(std::span<const Var> xs);
Var mean_pairwise(std::span<const Var> xs);

}  // namespace smug::ad
