#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "metricnet/adam.h"
#include "metricnet/data.h"
#include "metricnet/labels.h"
#include "metricnet/metrics.h"
#include "metricnet/model.h"

namespace metricnet {

struct TrainingConfig {
  AdamConfig adam;
  std::size_t batch_size = 8;
  double crop_seconds = 1.0;
  std::int64_t max_steps = 1000;
  std::uint64_t seed = 0;
  std::uint64_t init_seed = 0;
  /// Weight of the reconstruction term; 0 trains the quality branch only.
  double lambda = 1.0;
  /// Divide each utterance's TD-MSE by its length.
  bool td_mse_normalize = false;
  bool rank_loss = false;
  double rank_weight = 1.0;
  LabelKind label_kind = LabelKind::kOneHot;

  void validate() const;
};

struct StepStats {
  std::int64_t step = 0;
  double td_mse = 0;
  double emd2 = 0;
  double rank = 0;
  double total = 0;
};

struct DecoderReports {
  EvalReport expect;
  EvalReport max;
  std::vector<double> pred_expect;
  std::vector<double> pred_max;
  std::vector<double> truth;
};

/// Joint reconstruction + label-distribution training with Adam. Every step
/// draws its batch from an RNG seeded by (seed, step), so a run resumed from a
/// checkpoint replays the uninterrupted run exactly.
class Trainer {
 public:
  Trainer(ModelConfig model, QuantizerConfig quantizer, TrainingConfig training,
          std::vector<DatasetEntry> train);

  /// Restores parameters, buffers and optimizer state.
  void restore(const ModelBundle& bundle);

  /// Runs one optimizer step.
  StepStats step();
  std::int64_t steps() const { return optimizer_.steps(); }

  const ParamSet<float>& params() const { return params_; }
  ParamSet<float>& params() { return params_; }
  const MetricNet<float>& net() const { return net_; }
  const QuantizerConfig& quantizer() const { return quantizer_; }
  const TrainingConfig& training() const { return training_; }
  std::size_t crop_samples() const { return crop_; }

  ModelBundle bundle() const;

 private:
  MetricNet<float> net_;
  QuantizerConfig quantizer_;
  TrainingConfig training_;
  std::vector<DatasetEntry> train_;
  std::vector<std::vector<float>> targets_;
  std::vector<double> midpoints_;
  ParamSet<float> params_;
  Adam<float> optimizer_;
  std::size_t crop_ = 0;
};

/// Scores every entry with both decoders (eval mode, full length).
DecoderReports evaluate_entries(const MetricNet<float>& net,
                                const ParamSet<float>& params,
                                const QuantizerConfig& quantizer,
                                const std::vector<DatasetEntry>& entries);

}  // namespace metricnet
