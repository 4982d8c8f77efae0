#include "metricnet/tensor.h"

#include <sstream>
#include <stdexcept>

#include "metricnet/errors.h"

namespace metricnet {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename Real>
Tensor<Real>::Tensor(Shape s, Real fill)
    : shape(std::move(s)), values(numel(shape), fill) {}

template <typename Real>
Tensor<Real>::Tensor(Shape s, std::vector<Real> v)
    : shape(std::move(s)), values(std::move(v)) {
  if (values.size() != numel(shape)) {
    throw ShapeError("tensor of shape " + to_string(shape) + " given " +
                     std::to_string(values.size()) + " values");
  }
}

template <typename Real>
Tensor<Real>& ParamSet<Real>::add(const std::string& name, Shape shape,
                                  Real fill) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  return params_.emplace(name, Tensor<Real>(std::move(shape), fill))
      .first->second;
}

template <typename Real>
Tensor<Real>& ParamSet<Real>::add_buffer(const std::string& name, Shape shape,
                                         Real fill) {
  if (contains(name)) throw std::invalid_argument("duplicate buffer " + name);
  return buffers_.emplace(name, Tensor<Real>(std::move(shape), fill))
      .first->second;
}

template <typename Real>
bool ParamSet<Real>::contains(const std::string& name) const {
  return params_.contains(name) || buffers_.contains(name);
}

template <typename Real>
Tensor<Real>& ParamSet<Real>::at(const std::string& name) {
  if (auto it = params_.find(name); it != params_.end()) return it->second;
  if (auto it = buffers_.find(name); it != buffers_.end()) return it->second;
  throw std::out_of_range("no parameter named " + name);
}

template <typename Real>
const Tensor<Real>& ParamSet<Real>::at(const std::string& name) const {
  return const_cast<ParamSet*>(this)->at(name);
}

template <typename Real>
void ParamSet<Real>::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

template <typename Real>
void ParamSet<Real>::clear_grad() {
  for (auto& [_, t] : params_) t.grad.clear();
}

template <typename Real>
std::size_t ParamSet<Real>::num_parameters() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

template struct Tensor<float>;
template struct Tensor<double>;
template class ParamSet<float>;
template class ParamSet<double>;

}  // namespace metricnet
