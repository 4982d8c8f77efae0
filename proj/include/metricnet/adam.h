#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "metricnet/tensor.h"

namespace metricnet {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment estimates are keyed by parameter name.
template <typename Real>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update to every parameter, then clears the grad slots.
  /// Throws std::logic_error if any parameter has no gradient.
  void step(ParamSet<Real>& params);

  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  std::map<std::string, Tensor<Real>>& first_moments() { return m_; }
  std::map<std::string, Tensor<Real>>& second_moments() { return v_; }
  const std::map<std::string, Tensor<Real>>& first_moments() const { return m_; }
  const std::map<std::string, Tensor<Real>>& second_moments() const { return v_; }
  void set_steps(std::int64_t s) { steps_ = s; }

 private:
  AdamConfig cfg_;
  std::int64_t steps_ = 0;
  std::map<std::string, Tensor<Real>> m_;
  std::map<std::string, Tensor<Real>> v_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace metricnet
