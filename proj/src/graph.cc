#include "metricnet/graph.h"

#include <cmath>
#include <stdexcept>

#include "metricnet/errors.h"

namespace metricnet {
namespace {

template <typename Real>
void check_finite(const char* what, std::span<const Real> v) {
  for (Real x : v) {
    if (!std::isfinite(x)) {
      throw NumericalError(std::string("non-finite value in ") + what);
    }
  }
}

}  // namespace

template <typename Real>
const typename Graph<Real>::Node& Graph<Real>::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) {
    throw std::logic_error("variable does not belong to this graph");
  }
  return nodes_[v.id];
}

template <typename Real>
Var Graph<Real>::push(Node n) {
  if (n.value.size() != numel(n.shape)) {
    throw ShapeError("node value count does not match shape " +
                     to_string(n.shape));
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename Real>
Var Graph<Real>::constant(Shape shape, std::vector<Real> values) {
  check_finite<Real>("constant", values);
  return push(Node{std::move(shape), std::move(values), {}, false, {}, {}});
}

template <typename Real>
Var Graph<Real>::input(Shape shape, std::vector<Real> values) {
  check_finite<Real>("input", values);
  return push(Node{std::move(shape), std::move(values), {}, true, {}, {}});
}

template <typename Real>
Var Graph<Real>::param(const std::string& name, const Tensor<Real>& t) {
  check_finite<Real>(name.c_str(), t.values);
  return push(Node{t.shape, t.values, {}, true, name, {}});
}

template <typename Real>
Var Graph<Real>::emit(const char* op, Shape shape, std::vector<Real> values,
                      std::initializer_list<Var> parents, BackwardFn backward) {
  return emit(op, std::move(shape), std::move(values),
              std::span<const Var>(parents.begin(), parents.size()),
              std::move(backward));
}

template <typename Real>
Var Graph<Real>::emit(const char* op, Shape shape, std::vector<Real> values,
                      std::span<const Var> parents, BackwardFn backward) {
  check_finite<Real>(op, values);
  bool rg = false;
  for (Var p : parents) rg = rg || node(p).requires_grad;
  Node n{std::move(shape), std::move(values), {}, rg, {}, {}};
  if (rg) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename Real>
std::span<Real> Graph<Real>::grad_slot(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty()) n.grad.assign(n.value.size(), Real(0));
  return n.grad;
}

template <typename Real>
void Graph<Real>::backward(Var loss) {
  if (backward_done_) throw std::logic_error("backward already ran on this graph");
  if (nodes_.empty() || !loss.valid() || loss.id >= nodes_.size()) {
    throw std::logic_error("backward called before a forward pass produced a loss");
  }
  Node& root = nodes_[loss.id];
  if (root.value.size() != 1) {
    throw std::logic_error("backward requires a scalar loss, got shape " +
                           to_string(root.shape));
  }
  if (!root.requires_grad) {
    throw std::logic_error("loss is disconnected from every differentiable input");
  }
  backward_done_ = true;
  grad_slot(loss)[0] = Real(1);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    check_finite<Real>("gradient", n.grad);
    if (n.backward) n.backward(*this, id);
  }
}

template <typename Real>
void Graph<Real>::accumulate_param_grads(ParamSet<Real>& params) const {
  for (const Node& n : nodes_) {
    if (n.param_name.empty()) continue;
    Tensor<Real>& p = params.at(n.param_name);
    if (!p.has_grad()) p.zero_grad();
    if (n.grad.empty()) continue;
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
  }
}

template <typename Real>
void Graph<Real>::queue_buffer_update(std::string name, std::vector<Real> values) {
  buffer_updates_.emplace_back(std::move(name), std::move(values));
}

template <typename Real>
void Graph<Real>::apply_buffer_updates(ParamSet<Real>& params) const {
  for (const auto& [name, values] : buffer_updates_) {
    Tensor<Real>& b = params.at(name);
    if (b.values.size() != values.size()) {
      throw ShapeError("buffer update for " + name + " has wrong size");
    }
    b.values = values;
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace metricnet
