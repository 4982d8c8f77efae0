#include "metricnet/labels.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace metricnet {
namespace {

void check_length(std::span<const double> probs, const QuantizerConfig& cfg) {
  if (probs.size() != static_cast<std::size_t>(cfg.total())) {
    throw std::invalid_argument("distribution has " + std::to_string(probs.size()) +
                                " classes, quantizer expects " +
                                std::to_string(cfg.total()));
  }
}

void check_class(ClassIndex nu, const QuantizerConfig& cfg) {
  if (nu.value < 1 || nu.value > cfg.n_classes) {
    throw std::out_of_range("class index " + std::to_string(nu.value) +
                            " outside 1.." + std::to_string(cfg.n_classes));
  }
}

}  // namespace

QualityScore::QualityScore(double value) : value_(value) {
  if (!(value >= kScoreMin && value <= kScoreMax)) {
    throw std::out_of_range("quality score " + std::to_string(value) +
                            " outside [-0.5, 4.5]");
  }
}

std::vector<double> QuantizerConfig::midpoints() const {
  std::vector<double> mids(total());
  const double dl = step();
  for (int i = 0; i < total(); ++i) {
    mids[i] = kScoreMin + (i - pad) * dl + dl / 2;
  }
  return mids;
}

void QuantizerConfig::validate() const {
  if (n_classes < 1) throw std::invalid_argument("n_classes must be >= 1");
  if (pad < 0) throw std::invalid_argument("pad must be >= 0");
}

const char* to_string(LabelKind kind) {
  return kind == LabelKind::kSoft ? "soft" : "one-hot";
}

LabelKind parse_label_kind(const std::string& text) {
  if (text == "one-hot" || text == "onehot") return LabelKind::kOneHot;
  if (text == "soft") return LabelKind::kSoft;
  throw std::invalid_argument("unknown label kind '" + text + "'");
}

ClassIndex quantize(QualityScore score, const QuantizerConfig& cfg) {
  cfg.validate();
  const double dl = cfg.step();
  // ceil((s + 0.5) / dl), guarded against rounding at interval edges
  int n = static_cast<int>(std::ceil((score.value() - kScoreMin) / dl));
  while (n > 1 && score.value() <= kScoreMin + (n - 1) * dl) --n;
  while (n < cfg.n_classes && score.value() > kScoreMin + n * dl) ++n;
  return ClassIndex{std::clamp(n, 1, cfg.n_classes)};
}

LabelDistribution one_hot(ClassIndex nu, const QuantizerConfig& cfg) {
  cfg.validate();
  check_class(nu, cfg);
  LabelDistribution p(cfg.total(), 0.0);
  p[nu.value - 1 + cfg.pad] = 1.0;
  return p;
}

LabelDistribution soft_label(ClassIndex nu, const QuantizerConfig& cfg) {
  cfg.validate();
  if (cfg.pad < 2) {
    throw std::invalid_argument("soft labels need pad >= 2, got " +
                                std::to_string(cfg.pad));
  }
  check_class(nu, cfg);
  static constexpr double kMass[5] = {0.1, 0.2, 0.4, 0.2, 0.1};
  LabelDistribution p(cfg.total(), 0.0);
  const int centre = nu.value - 1 + cfg.pad;
  for (int k = -2; k <= 2; ++k) p[centre + k] = kMass[k + 2];
  return p;
}

LabelDistribution make_label(QualityScore score, const QuantizerConfig& cfg,
                             LabelKind kind) {
  const ClassIndex nu = quantize(score, cfg);
  return kind == LabelKind::kSoft ? soft_label(nu, cfg) : one_hot(nu, cfg);
}

QualityScore decode_max(std::span<const double> probs, const QuantizerConfig& cfg) {
  check_length(probs, cfg);
  const auto it = std::max_element(probs.begin(), probs.end());
  const double mid = cfg.midpoints()[static_cast<std::size_t>(it - probs.begin())];
  return QualityScore(std::clamp(mid, kScoreMin, kScoreMax));
}

QualityScore decode_expect(std::span<const double> probs,
                           const QuantizerConfig& cfg) {
  check_length(probs, cfg);
  const auto mids = cfg.midpoints();
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) s += probs[i] * mids[i];
  return QualityScore(std::clamp(s, kScoreMin, kScoreMax));
}

}  // namespace metricnet
