#pragma once

#include <string>
#include <utility>

#include "metricnet/graph.h"
#include "metricnet/signal.h"

// Differentiable primitives. Activations are laid out [batch, channels, time]
// unless stated otherwise.
namespace metricnet::ops {

template <typename Real>
Var add(Graph<Real>& g, Var a, Var b);

template <typename Real>
Var mul(Graph<Real>& g, Var a, Var b);

template <typename Real>
Var scale(Graph<Real>& g, Var a, Real factor);

/// Sum of all elements, shape [1].
template <typename Real>
Var sum(Graph<Real>& g, Var a);

/// Elementwise natural log; inputs must be positive.
template <typename Real>
Var log(Graph<Real>& g, Var a);

/// re^2 + im^2.
template <typename Real>
Var abs_squared(Graph<Real>& g, Var re, Var im);

/// mean((a - b)^2), shape [1].
template <typename Real>
Var mse_reduction(Graph<Real>& g, Var a, Var b);

/// x [B, Cin, T], weight [Cout, Cin], bias [Cout] -> [B, Cout, T].
template <typename Real>
Var conv1d_pointwise(Graph<Real>& g, Var x, Var weight, Var bias);

/// Per-channel dilated convolution with symmetric zero padding
/// dilation*(K-1)/2, so the output keeps length T. weight [C, K] with K odd.
template <typename Real>
Var conv1d_depthwise_dilated(Graph<Real>& g, Var x, Var weight, Var bias,
                             int dilation);

/// max(x, 0) + slope_c * min(x, 0), slope [C].
template <typename Real>
Var prelu(Graph<Real>& g, Var x, Var slope);

enum class Mode { kTrain, kEval };

/// Running statistics of a batch-norm layer, read from and written back to a
/// ParamSet through named buffers.
template <typename Real>
struct BatchNormStats {
  std::string mean_name;
  std::string var_name;
  const Tensor<Real>* running_mean = nullptr;
  const Tensor<Real>* running_var = nullptr;
  Real momentum = Real(0.99);
};

inline constexpr double kNormEps = 1e-5;

/// Per-channel normalisation over (batch x time). Train mode uses batch
/// statistics and queues running-stat updates on the graph; eval mode applies
/// the frozen running statistics.
template <typename Real>
Var batch_norm(Graph<Real>& g, Var x, Var gamma, Var beta,
               const BatchNormStats<Real>& stats, Mode mode);

/// Per-utterance normalisation over (channels x time) with per-channel affine.
template <typename Real>
Var global_layer_norm(Graph<Real>& g, Var x, Var gamma, Var beta);

/// Softmax over the last axis of [B, N].
template <typename Real>
Var softmax(Graph<Real>& g, Var x);

/// [B, C, T] -> [B, C].
template <typename Real>
Var mean_over_frames(Graph<Real>& g, Var x);

/// (mr + i mi) * (yr + i yi), all [B, F, T]. Returns (real, imag).
template <typename Real>
std::pair<Var, Var> complex_mask_apply(Graph<Real>& g, Var mask_re, Var mask_im,
                                       Var spec_re, Var spec_im);

/// Overlap-add inverse STFT of [B, F, T] real/imag parts -> [B, L].
template <typename Real>
Var istft(Graph<Real>& g, Var re, Var im, const StftConfig& cfg);

}  // namespace metricnet::ops
