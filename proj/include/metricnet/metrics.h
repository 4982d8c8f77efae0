#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace metricnet {

double mse_metric(std::span<const double> pred, std::span<const double> truth);

/// Pearson correlation; nullopt when n < 2 or either vector is constant.
std::optional<double> lcc(std::span<const double> pred, std::span<const double> truth);

/// Average ranks (1-based), ties share the mean of the ranks they span.
std::vector<double> fractional_ranks(std::span<const double> x);

/// Pearson correlation of fractional ranks; nullopt like lcc.
std::optional<double> srcc(std::span<const double> pred, std::span<const double> truth);

struct EvalReport {
  double mse = 0;
  std::optional<double> lcc;
  std::optional<double> srcc;
  std::size_t n = 0;

  /// "mse=... lcc=... srcc=... n=..." with "undefined" for missing values.
  std::string to_record(const std::string& prefix = "") const;
};

EvalReport evaluate(std::span<const double> pred, std::span<const double> truth);

}  // namespace metricnet
