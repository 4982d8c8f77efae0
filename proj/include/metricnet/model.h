#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metricnet/adam.h"
#include "metricnet/checkpoint.h"
#include "metricnet/graph.h"
#include "metricnet/labels.h"
#include "metricnet/ops.h"
#include "metricnet/signal.h"

namespace metricnet {

enum class NormKind { kBatchNorm, kGlobalLayerNorm };

struct ModelConfig {
  int bottleneck_channels = 256;
  int dconv_channels = 512;
  int kernel_size = 3;
  int blocks_per_repeat = 8;
  int repeats = 4;
  int n_classes_total = 100;
  int sample_rate = 16000;
  StftConfig stft;
  NormKind norm = NormKind::kBatchNorm;

  /// Block b of every repeat uses dilation 2^b.
  static int dilation(int block) { return 1 << block; }
  /// Frames of context seen by one trunk output frame.
  int receptive_field() const;

  void validate() const;
  std::map<std::string, std::string> to_header() const;
  static ModelConfig from_header(const std::map<std::string, std::string>& h);
};

/// STFT of a batch of equal-length utterances, packed [B, F, T].
template <typename Real>
struct SpectralFeatures {
  Shape shape;
  std::vector<Real> re;
  std::vector<Real> im;
  std::vector<Real> lps;
};

struct ModelOutputVars {
  Var reconstruction;  // [B, L]; invalid when the branch was skipped
  Var logits;          // [B, N, T]
  Var pooled;          // [B, N]
  Var distribution;    // [B, N]
};

template <typename Real>
class MetricNet {
 public:
  explicit MetricNet(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  /// Fan-in-scaled uniform init; quality head zero, mask heads start as the
  /// identity mask (real 1, imaginary 0).
  ParamSet<Real> init_params(std::uint64_t seed) const;
  /// Throws ShapeError if a tensor is missing or mis-shaped.
  void check_params(const ParamSet<Real>& params) const;

  SpectralFeatures<Real> features(std::span<const Waveform> batch) const;

  Var conv_block(Graph<Real>& g, const ParamSet<Real>& params, Var x,
                 int repeat, int block, ops::Mode mode) const;
  /// Bottleneck-channel stack of repeats x blocks_per_repeat ConvBlocks.
  Var trunk(Graph<Real>& g, const ParamSet<Real>& params, Var x,
            ops::Mode mode) const;

  ModelOutputVars forward(Graph<Real>& g, const ParamSet<Real>& params,
                          const SpectralFeatures<Real>& feats, ops::Mode mode,
                          bool reconstruct = true) const;

 private:
  Var param(Graph<Real>& g, const ParamSet<Real>& params,
            const std::string& name) const;
  Var norm(Graph<Real>& g, const ParamSet<Real>& params, Var x,
           const std::string& prefix, ops::Mode mode) const;

  ModelConfig cfg_;
};

/// Plain-value view of one utterance through the network in eval mode.
struct Prediction {
  std::vector<double> distribution;
  std::vector<double> pooled;
  std::vector<double> logits;  // N x T row-major
  int frames = 0;
  Waveform reconstruction;
  double score_expect = 0;
  double score_max = 0;
};

enum class Decoder { kExpect, kMax };

template <typename Real>
Prediction predict(const MetricNet<Real>& net, const ParamSet<Real>& params,
                   const QuantizerConfig& qcfg, const Waveform& w,
                   bool reconstruct = false);

template <typename Real>
QualityScore predict_quality(const MetricNet<Real>& net,
                             const ParamSet<Real>& params,
                             const QuantizerConfig& qcfg, const Waveform& w,
                             Decoder decoder);

/// Model, quantizer and (optionally) optimizer state in one checkpoint.
struct ModelBundle {
  ModelConfig model;
  QuantizerConfig quantizer;
  LabelKind label_kind = LabelKind::kOneHot;
  ParamSet<float> params;
  std::optional<Adam<float>> optimizer;
  std::map<std::string, std::string> extra;  // training metadata
};

void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::filesystem::path& path);

extern template class MetricNet<float>;
extern template class MetricNet<double>;

}  // namespace metricnet
