#include "metricnet/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace metricnet {
namespace {

void require_equal(std::size_t a, std::size_t b) {
  if (a != b) {
    throw std::invalid_argument("prediction/truth length mismatch (" +
                                std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

double mse_metric(std::span<const double> pred, std::span<const double> truth) {
  require_equal(pred.size(), truth.size());
  if (pred.empty()) throw std::invalid_argument("mse of empty vectors");
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  }
  return s / static_cast<double>(pred.size());
}

std::optional<double> lcc(std::span<const double> pred, std::span<const double> truth) {
  require_equal(pred.size(), truth.size());
  return pearson(pred, truth);
}

std::vector<double> fractional_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> srcc(std::span<const double> pred, std::span<const double> truth) {
  require_equal(pred.size(), truth.size());
  const auto rp = fractional_ranks(pred);
  const auto rt = fractional_ranks(truth);
  return pearson(rp, rt);
}

std::string EvalReport::to_record(const std::string& prefix) const {
  std::ostringstream os;
  os.precision(6);
  auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string("undefined");
    std::ostringstream s;
    s.precision(6);
    s << *v;
    return s.str();
  };
  os << prefix << "mse=" << mse << ' ' << prefix << "lcc=" << opt(lcc) << ' '
     << prefix << "srcc=" << opt(srcc) << ' ' << prefix << "n=" << n;
  return os.str();
}

EvalReport evaluate(std::span<const double> pred, std::span<const double> truth) {
  EvalReport r;
  r.mse = mse_metric(pred, truth);
  r.lcc = lcc(pred, truth);
  r.srcc = srcc(pred, truth);
  r.n = pred.size();
  return r;
}

}  // namespace metricnet
