#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "metricnet/labels.h"
#include "metricnet/signal.h"

namespace metricnet {

struct EntryMeta {
  std::optional<double> snr_db;
  bool perturbed = false;
  bool reverberant = false;
  std::string origin;
};

/// One training/evaluation example: model input, optional clean target, and
/// its quality label.
struct DatasetEntry {
  Waveform degraded;
  std::optional<Waveform> clean;
  QualityScore label{kScoreMin};
  EntryMeta meta;
};

/// RNG stream for entry `index` of split `stream`; entries are independent
/// of generation order.
std::mt19937_64 entry_rng(std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t index);

double mean_power(std::span<const double> x);
double snr_db(std::span<const double> signal, std::span<const double> noise);

struct Mixture {
  Waveform mixture;
  Waveform clean;  // reference with the same peak-normalisation gain
  double noise_gain = 1.0;
  double peak_gain = 1.0;
};

/// clean + g*noise with g chosen for the requested SNR, then both mixture and
/// reference scaled so the mixture peak is <= `peak_limit`. The noise is
/// looped or trimmed to the clean length.
Mixture mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db,
                   double peak_limit = 0.99);

/// Linear convolution truncated to the clean length.
Waveform convolve_rir(const Waveform& clean, const Waveform& rir);

struct PerturbConfig {
  double boost_frac = 0.30;
  double atten_frac = 0.50;
  double boost_gain = 2.0;
  double atten_gain = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class BinAction : std::uint8_t { kKeep, kBoost, kAttenuate };

/// Disjoint random bin sets of round(frac * bins) boosted and attenuated bins.
std::vector<BinAction> perturbation_plan(std::size_t bins, const PerturbConfig& cfg);

/// Scales the magnitudes of randomly chosen time-frequency bins, keeping
/// phase, and resynthesises. Output has the istft length.
Waveform perturb_spectrogram(const Waveform& w, const StftConfig& stft,
                             const PerturbConfig& cfg);

/// Affine SNR-to-score map: -12 dB -> 1.0, +30 dB -> 4.5, clamped.
double proxy_score_from_snr(double snr_db);
/// Stand-in quality label from the SNR of `degraded` against `clean`.
QualityScore proxy_label(const Waveform& clean, const Waveform& degraded);

enum class SignalKind { kToneComplex, kFilteredNoiseBurst, kChirp };
const char* to_string(SignalKind kind);

/// Deterministic speech-like test signal with a syllabic envelope, peak 0.9.
Waveform synth_clean(SignalKind kind, double duration_s, std::uint64_t seed,
                     int sample_rate = 16000);

enum class NoiseKind { kWhite, kPink, kHum };
Waveform synth_noise(NoiseKind kind, double duration_s, std::uint64_t seed,
                     int sample_rate = 16000);

struct SimulateConfig {
  std::size_t count = 20;
  double duration_s = 1.0;
  int sample_rate = 16000;
  double snr_min_db = -12.0;
  double snr_max_db = 30.0;
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> rir_paths;
  double rir_prob = 0.0;
  double perturb_prob = 0.0;
  PerturbConfig perturb;

  void validate() const;
};

DatasetEntry simulate_entry(const SimulateConfig& cfg, std::uint64_t stream,
                            std::size_t index,
                            const std::vector<Waveform>& rirs = {});
std::vector<DatasetEntry> simulate_dataset(const SimulateConfig& cfg,
                                           std::uint64_t stream);

/// Reads a manifest with a header naming degraded_path, clean_path and label
/// columns, tab- or comma-separated. Relative paths resolve against the
/// manifest directory. All problems are collected and raised as one
/// DataError with line numbers.
std::vector<DatasetEntry> load_manifest(const std::filesystem::path& path);

struct ManifestRow {
  std::string degraded_path;
  std::string clean_path;  // empty when absent
  double label = 0;
  std::optional<double> snr_db;
};

void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestRow>& rows);

}  // namespace metricnet
