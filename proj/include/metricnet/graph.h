#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "metricnet/tensor.h"

namespace metricnet {

/// Handle to a node in a Graph.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

/// Tape for reverse-mode differentiation. Nodes are appended in evaluation
/// order, so reverse insertion order is a valid topological order for the
/// backward sweep. A graph is single-use: build, backward once, discard.
template <typename Real>
class Graph {
 public:
  /// Receives the graph and the id of the node whose gradient is ready.
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Var constant(Shape shape, std::vector<Real> values);
  Var constant(const Tensor<Real>& t) { return constant(t.shape, t.values); }
  /// Leaf that receives a gradient.
  Var input(Shape shape, std::vector<Real> values);
  Var input(const Tensor<Real>& t) { return input(t.shape, t.values); }
  /// Leaf bound to a named parameter; see accumulate_param_grads.
  Var param(const std::string& name, const Tensor<Real>& t);

  const Shape& shape(Var v) const { return node(v).shape; }
  std::span<const Real> value(Var v) const { return node(v).value; }
  /// Empty until backward reached the node.
  std::span<const Real> grad(Var v) const { return node(v).grad; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape. Throws std::logic_error
  /// for an invalid/non-scalar loss, a loss with no differentiable inputs,
  /// or a second call.
  void backward(Var loss);

  /// Adds leaf gradients into the matching ParamSet entries, allocating
  /// zeroed grad slots where needed.
  void accumulate_param_grads(ParamSet<Real>& params) const;
  /// Normalisation layers in training mode report new running statistics
  /// here instead of mutating the parameter set during the forward pass.
  void queue_buffer_update(std::string name, std::vector<Real> values);
  void apply_buffer_updates(ParamSet<Real>& params) const;

  /// Appends an op result. `values` are checked for finiteness.
  Var emit(const char* op, Shape shape, std::vector<Real> values,
           std::initializer_list<Var> parents, BackwardFn backward);
  Var emit(const char* op, Shape shape, std::vector<Real> values,
           std::span<const Var> parents, BackwardFn backward);

  /// Gradient arriving at node `id` during backward.
  std::span<const Real> out_grad(std::size_t id) const { return nodes_[id].grad; }
  /// Zero-initialised accumulation slot of `v`; only valid when v requires grad.
  std::span<Real> grad_slot(Var v);

 private:
  struct Node {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;
    bool requires_grad = false;
    std::string param_name;
    BackwardFn backward;
  };

  const Node& node(Var v) const;
  Var push(Node n);

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, std::vector<Real>>> buffer_updates_;
  bool backward_done_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace metricnet
