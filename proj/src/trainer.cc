#include "metricnet/trainer.h"

#include <algorithm>
#include <numeric>

#include "metricnet/errors.h"
#include "metricnet/losses.h"

namespace metricnet {

void TrainingConfig::validate() const {
  if (adam.lr <= 0) throw ConfigError("training.lr must be positive");
  if (adam.beta1 < 0 || adam.beta1 >= 1 || adam.beta2 < 0 || adam.beta2 >= 1) {
    throw ConfigError("training betas must lie in [0, 1)");
  }
  if (adam.eps <= 0) throw ConfigError("training.eps must be positive");
  if (batch_size == 0) throw ConfigError("training.batch_size must be positive");
  if (crop_seconds <= 0) throw ConfigError("training.crop_seconds must be positive");
  if (max_steps < 0) throw ConfigError("training.max_steps must be >= 0");
  if (lambda < 0) throw ConfigError("training.lambda must be >= 0");
  if (rank_weight < 0) throw ConfigError("training.rank_weight must be >= 0");
}

Trainer::Trainer(ModelConfig model, QuantizerConfig quantizer, TrainingConfig training,
                 std::vector<DatasetEntry> train)
    : net_(std::move(model)),
      quantizer_(quantizer),
      training_(training),
      train_(std::move(train)),
      optimizer_(training.adam) {
  training_.validate();
  quantizer_.validate();
  const ModelConfig& cfg = net_.config();
  if (quantizer_.total() != cfg.n_classes_total) {
    throw ConfigError("quantizer defines " + std::to_string(quantizer_.total()) +
                      " classes but the model has " + std::to_string(cfg.n_classes_total));
  }
  if (training_.label_kind == LabelKind::kSoft && quantizer_.pad < 2) {
    throw ConfigError("soft labels need quantizer pad >= 2");
  }
  if (train_.empty()) throw DataError("training set is empty");

  crop_ = static_cast<std::size_t>(training_.crop_seconds * cfg.sample_rate);
  for (const auto& e : train_) {
    if (e.degraded.sample_rate != cfg.sample_rate) {
      throw DataError("training audio is " + std::to_string(e.degraded.sample_rate) +
                      " Hz, model expects " + std::to_string(cfg.sample_rate));
    }
    std::size_t usable = e.degraded.size();
    if (e.clean) usable = std::min(usable, e.clean->size());
    crop_ = std::min(crop_, usable);
  }
  if (crop_ < static_cast<std::size_t>(cfg.stft.window_len)) {
    throw DataError("training utterances are shorter than one STFT window");
  }
  for (const auto& e : train_) {
    const auto label = make_label(e.label, quantizer_, training_.label_kind);
    targets_.emplace_back(label.begin(), label.end());
  }
  midpoints_ = quantizer_.midpoints();
  params_ = net_.init_params(training_.init_seed);
}

void Trainer::restore(const ModelBundle& bundle) {
  net_.check_params(bundle.params);
  params_ = bundle.params;
  optimizer_ = Adam<float>(training_.adam);
  if (bundle.optimizer) {
    optimizer_.set_steps(bundle.optimizer->steps());
    optimizer_.first_moments() = bundle.optimizer->first_moments();
    optimizer_.second_moments() = bundle.optimizer->second_moments();
  }
}

StepStats Trainer::step() {
  const std::int64_t step_index = optimizer_.steps() + 1;
  auto rng = entry_rng(training_.seed, 0x7472616eULL, static_cast<std::uint64_t>(step_index));

  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t nb = training_.batch_size;

  std::vector<Waveform> inputs(nb);
  std::vector<std::size_t> picks(nb), offsets(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    picks[b] = order[b % order.size()];
    const auto& e = train_[picks[b]];
    std::size_t usable = e.degraded.size();
    if (e.clean) usable = std::min(usable, e.clean->size());
    offsets[b] = usable > crop_ ? rng() % (usable - crop_ + 1) : 0;
    inputs[b].sample_rate = e.degraded.sample_rate;
    inputs[b].samples.assign(e.degraded.samples.begin() + offsets[b],
                             e.degraded.samples.begin() + offsets[b] + crop_);
  }

  const std::size_t n_classes = quantizer_.total();
  std::vector<float> target(nb * n_classes);
  std::vector<double> truth(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    std::copy(targets_[picks[b]].begin(), targets_[picks[b]].end(),
              target.begin() + b * n_classes);
    truth[b] = train_[picks[b]].label.value();
  }

  bool any_clean = false;
  for (std::size_t b = 0; b < nb; ++b) any_clean = any_clean || train_[picks[b]].clean.has_value();
  const bool reconstruct = training_.lambda > 0 && any_clean;

  Graph<float> g;
  const auto feats = net_.features(inputs);
  const auto out = net_.forward(g, params_, feats, ops::Mode::kTrain, reconstruct);

  StepStats stats;
  stats.step = step_index;
  Var loss = ops::emd2<float>(g, out.distribution, target);
  stats.emd2 = g.value(loss)[0];
  if (reconstruct) {
    const std::size_t len = g.shape(out.reconstruction)[1];
    std::vector<float> reference(nb * len, 0.0f), weights(nb, 0.0f);
    for (std::size_t b = 0; b < nb; ++b) {
      const auto& e = train_[picks[b]];
      if (!e.clean) continue;  // quality-only entry
      weights[b] = 1.0f;
      for (std::size_t i = 0; i < len; ++i) {
        reference[b * len + i] = static_cast<float>(e.clean->samples[offsets[b] + i]);
      }
    }
    const Var td = ops::td_mse<float>(g, out.reconstruction, reference, weights,
                                      training_.td_mse_normalize);
    stats.td_mse = g.value(td)[0];
    loss = ops::add(g, ops::scale(g, td, static_cast<float>(training_.lambda)), loss);
  }
  if (training_.rank_loss && nb >= 2) {
    const Var scores = ops::expected_value(g, out.distribution, midpoints_);
    const Var rank = ops::rank_loss(g, scores, truth);
    stats.rank = g.value(rank)[0];
    loss = ops::add(g, ops::scale(g, rank, static_cast<float>(training_.rank_weight)), loss);
  }
  stats.total = g.value(loss)[0];

  params_.zero_grad();
  g.backward(loss);
  g.accumulate_param_grads(params_);
  g.apply_buffer_updates(params_);
  optimizer_.step(params_);
  return stats;
}

ModelBundle Trainer::bundle() const {
  ModelBundle b;
  b.model = net_.config();
  b.quantizer = quantizer_;
  b.label_kind = training_.label_kind;
  b.params = params_;
  b.optimizer = optimizer_;
  b.extra["seed"] = std::to_string(training_.seed);
  b.extra["step"] = std::to_string(optimizer_.steps());
  return b;
}

DecoderReports evaluate_entries(const MetricNet<float>& net, const ParamSet<float>& params,
                                const QuantizerConfig& quantizer,
                                const std::vector<DatasetEntry>& entries) {
  if (entries.empty()) throw DataError("evaluation set is empty");
  DecoderReports r;
  for (const auto& e : entries) {
    const Prediction p = predict(net, params, quantizer, e.degraded);
    r.pred_expect.push_back(p.score_expect);
    r.pred_max.push_back(p.score_max);
    r.truth.push_back(e.label.value());
  }
  r.expect = evaluate(r.pred_expect, r.truth);
  r.max = evaluate(r.pred_max, r.truth);
  return r;
}

}  // namespace metricnet
