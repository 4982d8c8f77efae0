#pragma once

#include <span>
#include <string>
#include <vector>

namespace metricnet {

inline constexpr double kScoreMin = -0.5;
inline constexpr double kScoreMax = 4.5;

/// A quality score in [-0.5, 4.5].
class QualityScore {
 public:
  /// Throws std::out_of_range outside the closed range.
  explicit QualityScore(double value);
  double value() const { return value_; }

 private:
  double value_;
};

/// 1-based class index into the unpadded classes 1..N.
struct ClassIndex {
  int value = 1;
};

/// N equal-width classes over (-0.5, 4.5], plus `pad` extra classes on each
/// side for label mass that spills past the range.
struct QuantizerConfig {
  int n_classes = 100;
  int pad = 0;

  double step() const { return (kScoreMax - kScoreMin) / n_classes; }
  int total() const { return n_classes + 2 * pad; }
  /// Midpoint of every padded class, extrapolated linearly past the range.
  std::vector<double> midpoints() const;
  /// Throws std::invalid_argument for N < 1 or pad < 0.
  void validate() const;
};

enum class LabelKind { kOneHot, kSoft };

const char* to_string(LabelKind kind);
/// Accepts "one-hot" or "soft".
LabelKind parse_label_kind(const std::string& text);

/// Smallest n with score <= -0.5 + n*step; -0.5 itself maps to class 1.
ClassIndex quantize(QualityScore score, const QuantizerConfig& cfg);

/// Probability vector of length cfg.total().
using LabelDistribution = std::vector<double>;

/// All mass on class nu (at padded index nu + pad).
LabelDistribution one_hot(ClassIndex nu, const QuantizerConfig& cfg);

/// Masses 0.1, 0.2, 0.4, 0.2, 0.1 centred on class nu; mass beyond the score
/// range lands on the pad classes. Requires pad >= 2.
LabelDistribution soft_label(ClassIndex nu, const QuantizerConfig& cfg);

LabelDistribution make_label(QualityScore score, const QuantizerConfig& cfg,
                             LabelKind kind);

/// Midpoint of the most probable class, ties to the lower index, clamped.
QualityScore decode_max(std::span<const double> probs, const QuantizerConfig& cfg);

/// Expected midpoint under `probs`, clamped.
QualityScore decode_expect(std::span<const double> probs,
                           const QuantizerConfig& cfg);

}  // namespace metricnet
