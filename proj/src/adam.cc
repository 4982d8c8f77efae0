#include "metricnet/adam.h"

#include <cmath>
#include <stdexcept>

namespace metricnet {

template <typename Real>
void Adam<Real>::step(ParamSet<Real>& params) {
  for (const auto& [name, p] : params.params()) {
    if (!p.has_grad()) {
      throw std::logic_error("adam step: parameter '" + name + "' has no gradient");
    }
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  const Real b1 = static_cast<Real>(cfg_.beta1);
  const Real b2 = static_cast<Real>(cfg_.beta2);
  for (auto& [name, p] : params.params()) {
    auto& m = m_.try_emplace(name, Tensor<Real>(p.shape)).first->second;
    auto& v = v_.try_emplace(name, Tensor<Real>(p.shape)).first->second;
    if (m.size() != p.size() || v.size() != p.size()) {
      throw std::logic_error("adam state for '" + name + "' has the wrong size");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Real gi = p.grad[i];
      m.values[i] = b1 * m.values[i] + (1 - b1) * gi;
      v.values[i] = b2 * v.values[i] + (1 - b2) * gi * gi;
      const double m_hat = m.values[i] / bc1;
      const double v_hat = v.values[i] / bc2;
      p.values[i] -= static_cast<Real>(cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps));
    }
    p.grad.clear();
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace metricnet
