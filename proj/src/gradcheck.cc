#include "metricnet/gradcheck.h"

#include <algorithm>
#include <cmath>

namespace metricnet {
namespace {

double rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

void record(GradCheckReport& r, double err, const std::string& where,
            std::size_t index) {
  ++r.coordinates;
  if (err > r.max_rel_error) {
    r.max_rel_error = err;
    r.worst_input = where;
    r.worst_index = index;
  }
}

}  // namespace

GradCheckReport gradient_check(const LossBuilder& build,
                               std::vector<Tensor<double>> inputs, double step,
                               double tol) {
  auto evaluate = [&](bool with_grad, std::vector<std::vector<double>>* grads) {
    Graph<double> g;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(g.input(t));
    const Var loss = build(g, vars);
    const double value = g.value(loss)[0];
    if (with_grad) {
      g.backward(loss);
      for (std::size_t i = 0; i < vars.size(); ++i) {
        auto gi = g.grad(vars[i]);
        (*grads)[i].assign(inputs[i].size(), 0.0);
        std::copy(gi.begin(), gi.end(), (*grads)[i].begin());
      }
    }
    return value;
  };

  std::vector<std::vector<double>> analytic(inputs.size());
  evaluate(true, &analytic);

  GradCheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k].values[i];
      inputs[k].values[i] = orig + step;
      const double up = evaluate(false, nullptr);
      inputs[k].values[i] = orig - step;
      const double down = evaluate(false, nullptr);
      inputs[k].values[i] = orig;
      record(report, rel_error(analytic[k][i], (up - down) / (2 * step)),
             "input " + std::to_string(k), i);
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

GradCheckReport gradient_check_params(const ParamLossBuilder& build,
                                      ParamSet<double> params, double step,
                                      double tol, std::size_t stride) {
  stride = std::max<std::size_t>(stride, 1);
  ParamSet<double> analytic = params;
  analytic.zero_grad();
  {
    Graph<double> g;
    const Var loss = build(g, params);
    g.backward(loss);
    g.accumulate_param_grads(analytic);
  }

  auto evaluate = [&]() {
    Graph<double> g;
    return g.value(build(g, params))[0];
  };

  GradCheckReport report;
  for (auto& [name, tensor] : params.params()) {
    const auto& grad = analytic.at(name).grad;
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      if (i % stride != 0 && i + 1 != tensor.size()) continue;
      const double orig = tensor.values[i];
      tensor.values[i] = orig + step;
      const double up = evaluate();
      tensor.values[i] = orig - step;
      const double down = evaluate();
      tensor.values[i] = orig;
      record(report, rel_error(grad[i], (up - down) / (2 * step)), name, i);
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace metricnet
