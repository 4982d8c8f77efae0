#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "metricnet/graph.h"
#include "metricnet/tensor.h"

namespace metricnet {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_input;   // input index or parameter name
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
  bool passed = true;
};

/// Builds a scalar loss from graph inputs created for each tensor in `inputs`.
using LossBuilder = std::function<Var(Graph<double>&, std::span<const Var>)>;

/// Compares analytic gradients against central differences for every input
/// coordinate. Relative error is |a - d| / max(|a|, |d|, 1e-8).
GradCheckReport gradient_check(const LossBuilder& build,
                               std::vector<Tensor<double>> inputs,
                               double step = 1e-5, double tol = 1e-4);

using ParamLossBuilder = std::function<Var(Graph<double>&, const ParamSet<double>&)>;

/// Same check over every coordinate of every trainable tensor in `params`.
/// Running-stat updates stay queued on the discarded graphs, so every probe
/// sees the same buffers. `stride` > 1 probes every stride-th
/// coordinate of each tensor (the first and last are always probed).
GradCheckReport gradient_check_params(const ParamLossBuilder& build,
                                      ParamSet<double> params,
                                      double step = 1e-5, double tol = 1e-4,
                                      std::size_t stride = 1);

}  // namespace metricnet
