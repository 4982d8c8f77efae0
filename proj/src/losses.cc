#include "metricnet/losses.h"

#include <cmath>
#include <stdexcept>
#include <string>

#include "metricnet/errors.h"

namespace metricnet {
namespace {

void require_equal(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" +
                                std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double emd2(std::span<const double> predicted, std::span<const double> target) {
  require_equal(predicted.size(), target.size(), "emd2");
  double cp = 0, ct = 0, s = 0;
  for (std::size_t n = 0; n < predicted.size(); ++n) {
    cp += predicted[n];
    ct += target[n];
    s += (cp - ct) * (cp - ct);
  }
  return s;
}

double td_mse(std::span<const double> estimate, std::span<const double> reference) {
  require_equal(estimate.size(), reference.size(), "td_mse");
  if (estimate.empty()) return 0.0;
  double me = 0, mr = 0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    me += estimate[i];
    mr += reference[i];
  }
  me /= static_cast<double>(estimate.size());
  mr /= static_cast<double>(reference.size());
  double s = 0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double d = (reference[i] - mr) - (estimate[i] - me);
    s += d * d;
  }
  return s;
}

double td_mse(const Waveform& estimate, const Waveform& reference) {
  return td_mse(estimate.samples, reference.samples);
}

double joint_loss(double td_mse_value, double emd2_value, double lambda) {
  return lambda * td_mse_value + emd2_value;
}

double rank_loss(std::span<const double> predicted, std::span<const double> truth) {
  require_equal(predicted.size(), truth.size(), "rank_loss");
  if (predicted.size() < 2) {
    throw std::invalid_argument("rank_loss needs at least two items");
  }
  double s = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (truth[i] > truth[j]) {
        s += softplus(-(predicted[i] - predicted[j]));
        ++pairs;
      }
    }
  }
  return pairs ? s / static_cast<double>(pairs) : 0.0;
}

namespace ops {

template <typename Real>
Var emd2(Graph<Real>& g, Var predicted, std::span<const Real> target) {
  const auto& s = g.shape(predicted);
  if (s.size() != 2 || s[0] * s[1] != target.size()) {
    throw ShapeError("emd2: prediction " + to_string(s) + " vs " +
                     std::to_string(target.size()) + " target values");
  }
  const std::size_t nb = s[0], n = s[1];
  auto p = g.value(predicted);
  std::vector<Real> cdiff(nb * n);  // running prefix-sum differences
  Real total = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    Real c = 0;
    for (std::size_t i = 0; i < n; ++i) {
      c += p[b * n + i] - target[b * n + i];
      cdiff[b * n + i] = c;
      total += c * c;
    }
  }
  return g.emit("emd2", {1}, {total / static_cast<Real>(nb)}, {predicted},
                [predicted, nb, n, cdiff = std::move(cdiff)](Graph<Real>& gr,
                                                             std::size_t id) {
                  const Real dy = gr.out_grad(id)[0] / static_cast<Real>(nb);
                  auto dp = gr.grad_slot(predicted);
                  // d/dp_m sum_k (C_k)^2 = 2 sum_{k >= m} C_k
                  for (std::size_t b = 0; b < nb; ++b) {
                    Real tail = 0;
                    for (std::size_t i = n; i-- > 0;) {
                      tail += cdiff[b * n + i];
                      dp[b * n + i] += 2 * dy * tail;
                    }
                  }
                });
}

template <typename Real>
Var td_mse(Graph<Real>& g, Var estimate, std::span<const Real> reference,
           std::span<const Real> weights, bool normalize) {
  const auto& s = g.shape(estimate);
  if (s.size() != 2 || s[0] * s[1] != reference.size() || weights.size() != s[0]) {
    throw ShapeError("td_mse: estimate " + to_string(s) + " vs " +
                     std::to_string(reference.size()) + " reference samples, " +
                     std::to_string(weights.size()) + " weights");
  }
  const std::size_t nb = s[0], len = s[1];
  auto x = g.value(estimate);
  std::vector<Real> diff(nb * len);
  std::vector<Real> scale(nb);
  Real total = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    double me = 0, mr = 0;
    for (std::size_t i = 0; i < len; ++i) {
      me += x[b * len + i];
      mr += reference[b * len + i];
    }
    me /= static_cast<double>(len);
    mr /= static_cast<double>(len);
    double sq = 0;
    for (std::size_t i = 0; i < len; ++i) {
      const double d = (x[b * len + i] - me) - (reference[b * len + i] - mr);
      diff[b * len + i] = static_cast<Real>(d);
      sq += d * d;
    }
    scale[b] = weights[b] / (normalize ? static_cast<Real>(len) : Real(1));
    total += scale[b] * static_cast<Real>(sq);
  }
  return g.emit("td_mse", {1}, {total / static_cast<Real>(nb)}, {estimate},
                [estimate, nb, len, diff = std::move(diff),
                 scale = std::move(scale)](Graph<Real>& gr, std::size_t id) {
                  // centred difference has zero mean, so d/dx_i = 2 d_i
                  const Real dy = gr.out_grad(id)[0] / static_cast<Real>(nb);
                  auto dx = gr.grad_slot(estimate);
                  for (std::size_t b = 0; b < nb; ++b) {
                    const Real k = 2 * dy * scale[b];
                    for (std::size_t i = 0; i < len; ++i) {
                      dx[b * len + i] += k * diff[b * len + i];
                    }
                  }
                });
}

template <typename Real>
Var expected_value(Graph<Real>& g, Var probs, std::span<const double> values) {
  const auto& s = g.shape(probs);
  if (s.size() != 2 || s[1] != values.size()) {
    throw ShapeError("expected_value: " + to_string(s) + " vs " +
                     std::to_string(values.size()) + " values");
  }
  const std::size_t nb = s[0], n = s[1];
  std::vector<Real> vals(values.begin(), values.end());
  auto p = g.value(probs);
  std::vector<Real> out(nb, 0);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t i = 0; i < n; ++i) out[b] += p[b * n + i] * vals[i];
  }
  return g.emit("expected_value", {nb}, std::move(out), {probs},
                [probs, nb, n, vals = std::move(vals)](Graph<Real>& gr,
                                                       std::size_t id) {
                  auto dy = gr.out_grad(id);
                  auto dp = gr.grad_slot(probs);
                  for (std::size_t b = 0; b < nb; ++b) {
                    for (std::size_t i = 0; i < n; ++i) dp[b * n + i] += dy[b] * vals[i];
                  }
                });
}

template <typename Real>
Var rank_loss(Graph<Real>& g, Var predicted, std::span<const double> truth) {
  const auto& s = g.shape(predicted);
  if (s.size() != 1 || s[0] != truth.size()) {
    throw ShapeError("rank_loss: prediction " + to_string(s) + " vs " +
                     std::to_string(truth.size()) + " targets");
  }
  if (truth.size() < 2) throw std::invalid_argument("rank_loss needs at least two items");
  const std::size_t n = truth.size();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (truth[i] > truth[j]) pairs.emplace_back(i, j);
    }
  }
  auto p = g.value(predicted);
  double total = 0;
  for (auto [i, j] : pairs) total += softplus(-static_cast<double>(p[i] - p[j]));
  const double count = pairs.empty() ? 1.0 : static_cast<double>(pairs.size());
  return g.emit("rank_loss", {1}, {static_cast<Real>(total / count)}, {predicted},
                [predicted, count, pairs = std::move(pairs)](Graph<Real>& gr,
                                                             std::size_t id) {
                  const double dy = gr.out_grad(id)[0] / count;
                  auto p = gr.value(predicted);
                  auto dp = gr.grad_slot(predicted);
                  for (auto [i, j] : pairs) {
                    // d softplus(-z)/dz = -sigmoid(-z)
                    const double z = p[i] - p[j];
                    const double sig = 1.0 / (1.0 + std::exp(z));
                    dp[i] -= static_cast<Real>(dy * sig);
                    dp[j] += static_cast<Real>(dy * sig);
                  }
                });
}

#define METRICNET_INSTANTIATE_LOSSES(R)                                            \
  template Var emd2<R>(Graph<R>&, Var, std::span<const R>);                        \
  template Var td_mse<R>(Graph<R>&, Var, std::span<const R>, std::span<const R>,  \
                         bool);                                                    \
  template Var expected_value<R>(Graph<R>&, Var, std::span<const double>);         \
  template Var rank_loss<R>(Graph<R>&, Var, std::span<const double>);

METRICNET_INSTANTIATE_LOSSES(float)
METRICNET_INSTANTIATE_LOSSES(double)

#undef METRICNET_INSTANTIATE_LOSSES

}  // namespace ops
}  // namespace metricnet
