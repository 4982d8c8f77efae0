#pragma once

#include <span>
#include <vector>

#include "metricnet/graph.h"
#include "metricnet/signal.h"

namespace metricnet {

/// Squared earth mover's distance between two distributions over ordered
/// classes: sum_n (P_hat_n - P_n)^2 over the running prefix sums.
double emd2(std::span<const double> predicted, std::span<const double> target);

/// ||(x - mean x) - (x_hat - mean x_hat)||^2. Lengths must match.
double td_mse(std::span<const double> estimate, std::span<const double> reference);
double td_mse(const Waveform& estimate, const Waveform& reference);

/// lambda * td_mse + emd2.
double joint_loss(double td_mse_value, double emd2_value, double lambda = 1.0);

/// Mean of softplus(-(pred_i - pred_j)) over pairs with truth_i > truth_j.
/// Needs at least two items; returns 0 when no pair is strictly ordered.
double rank_loss(std::span<const double> predicted, std::span<const double> truth);

double softplus(double x);

namespace ops {

/// Batch mean of emd2 between rows of `predicted` [B, N] and the constant
/// `target` (B*N values, row-major).
template <typename Real>
Var emd2(Graph<Real>& g, Var predicted, std::span<const Real> target);

/// Batch mean of weight_b * td_mse(estimate_b, reference_b) for [B, L]
/// estimates; `normalize` divides each term by L.
template <typename Real>
Var td_mse(Graph<Real>& g, Var estimate, std::span<const Real> reference,
           std::span<const Real> weights, bool normalize = false);

/// Row-wise dot product of [B, N] with a constant length-N vector -> [B].
template <typename Real>
Var expected_value(Graph<Real>& g, Var probs, std::span<const double> values);

template <typename Real>
Var rank_loss(Graph<Real>& g, Var predicted, std::span<const double> truth);

}  // namespace ops
}  // namespace metricnet
