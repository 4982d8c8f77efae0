#include "metricnet/data.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "metricnet/errors.h"
#include "metricnet/log.h"
#include "metricnet/wav.h"

namespace metricnet {
namespace {

constexpr double kPi = std::numbers::pi;

void require_same_rate(const Waveform& a, const Waveform& b, const char* what) {
  if (a.sample_rate != b.sample_rate) {
    throw std::invalid_argument(std::string(what) + ": sample rates differ (" +
                                std::to_string(a.sample_rate) + " vs " +
                                std::to_string(b.sample_rate) + " Hz)");
  }
}

void peak_normalise(std::vector<double>& x, double peak) {
  double m = 0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > 0) {
    for (double& v : x) v *= peak / m;
  }
}

// Sum of raised-cosine bumps at roughly syllable rate (3-6 Hz).
std::vector<double> syllabic_envelope(std::size_t n, int rate, std::mt19937_64& rng) {
  std::vector<double> env(n, 0.0);
  std::uniform_real_distribution<double> gap(0.03, 0.12), len(0.10, 0.28),
      level(0.4, 1.0);
  double t = gap(rng) * 0.5;
  const double total = static_cast<double>(n) / rate;
  while (t < total) {
    const double l = len(rng), a = level(rng);
    const auto start = static_cast<std::size_t>(t * rate);
    const auto width = static_cast<std::size_t>(l * rate);
    for (std::size_t i = 0; i < width && start + i < n; ++i) {
      const double u = static_cast<double>(i) / width;
      env[start + i] = std::max(env[start + i], a * 0.5 * (1 - std::cos(2 * kPi * u)));
    }
    t += l + gap(rng);
  }
  return env;
}

struct Biquad {
  double b0, b1, b2, a1, a2;
  double z1 = 0, z2 = 0;

  static Biquad bandpass(double centre_hz, double q, int rate) {
    const double w = 2 * kPi * centre_hz / rate;
    const double alpha = std::sin(w) / (2 * q);
    const double a0 = 1 + alpha;
    return {alpha / a0, 0.0, -alpha / a0, -2 * std::cos(w) / a0, (1 - alpha) / a0};
  }

  double operator()(double x) {
    const double y = b0 * x + z1;
    z1 = b1 * x - a1 * y + z2;
    z2 = b2 * x - a2 * y;
    return y;
  }
};

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t\r");
    const auto e = f.find_last_not_of(" \t\r");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

}  // namespace

std::mt19937_64 entry_rng(std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

double mean_power(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

double snr_db(std::span<const double> signal, std::span<const double> noise) {
  return 10.0 * std::log10(mean_power(signal) / mean_power(noise));
}

Mixture mix_at_snr(const Waveform& clean, const Waveform& noise, double snr,
                   double peak_limit) {
  require_same_rate(clean, noise, "mix_at_snr");
  if (noise.samples.empty()) throw std::invalid_argument("mix_at_snr: empty noise");
  const std::size_t n = clean.size();
  std::vector<double> looped(n);
  for (std::size_t i = 0; i < n; ++i) looped[i] = noise.samples[i % noise.size()];
  const double pc = mean_power(clean.samples);
  const double pn = mean_power(looped);
  if (pc <= 0) throw std::invalid_argument("mix_at_snr: clean signal is silent");
  if (pn <= 0) throw std::invalid_argument("mix_at_snr: noise is silent");

  Mixture m;
  m.noise_gain = std::sqrt(pc / (pn * std::pow(10.0, snr / 10.0)));
  m.mixture.sample_rate = m.clean.sample_rate = clean.sample_rate;
  m.mixture.samples.resize(n);
  double peak = 0;
  for (std::size_t i = 0; i < n; ++i) {
    m.mixture.samples[i] = clean.samples[i] + m.noise_gain * looped[i];
    peak = std::max(peak, std::abs(m.mixture.samples[i]));
  }
  m.peak_gain = peak > peak_limit ? peak_limit / peak : 1.0;
  m.clean.samples = clean.samples;
  for (std::size_t i = 0; i < n; ++i) {
    m.mixture.samples[i] *= m.peak_gain;
    m.clean.samples[i] *= m.peak_gain;
  }
  return m;
}

Waveform convolve_rir(const Waveform& clean, const Waveform& rir) {
  require_same_rate(clean, rir, "convolve_rir");
  Waveform out;
  out.sample_rate = clean.sample_rate;
  out.samples.assign(clean.size(), 0.0);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double x = clean.samples[i];
    if (x == 0) continue;
    const std::size_t m = std::min(rir.size(), clean.size() - i);
    for (std::size_t k = 0; k < m; ++k) out.samples[i + k] += x * rir.samples[k];
  }
  return out;
}

void PerturbConfig::validate() const {
  if (boost_frac < 0 || atten_frac < 0 || boost_frac + atten_frac > 1.0) {
    throw std::invalid_argument("perturbation fractions must be non-negative and sum to <= 1");
  }
  if (boost_gain < 0 || atten_gain < 0) {
    throw std::invalid_argument("perturbation gains must be non-negative");
  }
}

std::vector<BinAction> perturbation_plan(std::size_t bins, const PerturbConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> order(bins);
  for (std::size_t i = 0; i < bins; ++i) order[i] = i;
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_boost = static_cast<std::size_t>(std::llround(cfg.boost_frac * bins));
  const auto n_atten = static_cast<std::size_t>(std::llround(cfg.atten_frac * bins));
  std::vector<BinAction> plan(bins, BinAction::kKeep);
  for (std::size_t i = 0; i < n_boost; ++i) plan[order[i]] = BinAction::kBoost;
  for (std::size_t i = n_boost; i < std::min(bins, n_boost + n_atten); ++i) {
    plan[order[i]] = BinAction::kAttenuate;
  }
  return plan;
}

Waveform perturb_spectrogram(const Waveform& w, const StftConfig& stft_cfg,
                             const PerturbConfig& cfg) {
  ComplexSpectrogram s = stft(w, stft_cfg);
  const auto plan = perturbation_plan(s.data().size(), cfg);
  auto data = s.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (plan[i] == BinAction::kBoost) data[i] *= cfg.boost_gain;
    if (plan[i] == BinAction::kAttenuate) data[i] *= cfg.atten_gain;
  }
  return istft(s, stft_cfg, w.sample_rate);
}

double proxy_score_from_snr(double snr) {
  if (std::isnan(snr)) throw std::invalid_argument("proxy score of NaN SNR");
  return std::clamp(1.0 + 3.5 * (snr + 12.0) / 42.0, 1.0, 4.5);
}

QualityScore proxy_label(const Waveform& clean, const Waveform& degraded) {
  require_same_rate(clean, degraded, "proxy_label");
  if (clean.size() != degraded.size()) {
    throw std::invalid_argument("proxy_label: length mismatch");
  }
  const double pc = mean_power(clean.samples);
  if (pc <= 0) throw std::invalid_argument("proxy_label: clean signal is silent");
  std::vector<double> diff(clean.size());
  for (std::size_t i = 0; i < diff.size(); ++i) {
    diff[i] = degraded.samples[i] - clean.samples[i];
  }
  const double pd = mean_power(diff);
  if (pd == 0) return QualityScore(4.5);
  return QualityScore(proxy_score_from_snr(10.0 * std::log10(pc / pd)));
}

const char* to_string(SignalKind kind) {
  switch (kind) {
    case SignalKind::kToneComplex: return "tone-complex";
    case SignalKind::kFilteredNoiseBurst: return "filtered-noise-burst";
    case SignalKind::kChirp: return "chirp";
  }
  return "unknown";
}

Waveform synth_clean(SignalKind kind, double duration_s, std::uint64_t seed,
                     int sample_rate) {
  if (duration_s < 0.2) throw std::invalid_argument("synth_clean: duration below 0.2 s");
  if (sample_rate <= 0) throw std::invalid_argument("synth_clean: bad sample rate");
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(n, 0.0);
  const double nyquist = sample_rate / 2.0;

  switch (kind) {
    case SignalKind::kToneComplex: {
      const double f0 = 100 + 150 * u(rng);
      const double vib_rate = 3 + 3 * u(rng), vib_depth = 0.03 + 0.05 * u(rng);
      const double formant = 500 + 1500 * u(rng);
      double phase = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        const double f = f0 * (1 + vib_depth * std::sin(2 * kPi * vib_rate * t));
        phase += 2 * kPi * f / sample_rate;
        double s = 0;
        for (int h = 1; h <= 12 && h * f < nyquist; ++h) {
          const double hf = h * f;
          const double emphasis = 1.0 / (1.0 + std::pow((hf - formant) / 400.0, 2));
          s += (1.0 / h + emphasis) * std::sin(h * phase);
        }
        w.samples[i] = s;
      }
      break;
    }
    case SignalKind::kFilteredNoiseBurst: {
      auto bp = Biquad::bandpass(std::min(400 + 2600 * u(rng), 0.45 * sample_rate),
                                 2 + 4 * u(rng), sample_rate);
      for (std::size_t i = 0; i < n; ++i) w.samples[i] = bp(gauss(rng));
      break;
    }
    case SignalKind::kChirp: {
      const double f1 = 150 + 300 * u(rng);
      const double f2 = std::min(f1 + 500 + 2500 * u(rng), 0.45 * sample_rate);
      double phase = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double frac = static_cast<double>(i) / n;
        phase += 2 * kPi * (f1 + (f2 - f1) * frac) / sample_rate;
        w.samples[i] = std::sin(phase) + 0.3 * std::sin(2 * phase);
      }
      break;
    }
  }
  const auto env = syllabic_envelope(n, sample_rate, rng);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] *= env[i];
  peak_normalise(w.samples, 0.9);
  return w;
}

Waveform synth_noise(NoiseKind kind, double duration_s, std::uint64_t seed,
                     int sample_rate) {
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  if (n == 0) throw std::invalid_argument("synth_noise: zero duration");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(n);
  switch (kind) {
    case NoiseKind::kWhite:
      for (auto& v : w.samples) v = gauss(rng);
      break;
    case NoiseKind::kPink: {
      // Paul Kellet's economy pink filter
      double b0 = 0, b1 = 0, b2 = 0;
      for (auto& v : w.samples) {
        const double x = gauss(rng);
        b0 = 0.99765 * b0 + x * 0.0990460;
        b1 = 0.96300 * b1 + x * 0.2965164;
        b2 = 0.57000 * b2 + x * 1.0526913;
        v = b0 + b1 + b2 + x * 0.1848;
      }
      break;
    }
    case NoiseKind::kHum: {
      const double f = 50 + 10 * u(rng);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        double s = 0;
        for (int h = 1; h <= 8; ++h) s += std::sin(2 * kPi * h * f * t + h) / h;
        w.samples[i] = s + 0.2 * gauss(rng);
      }
      break;
    }
  }
  peak_normalise(w.samples, 0.9);
  return w;
}

void SimulateConfig::validate() const {
  if (count == 0) throw ConfigError("simulate: count must be positive");
  if (duration_s < 0.2) throw ConfigError("simulate: duration must be >= 0.2 s");
  if (sample_rate <= 0) throw ConfigError("simulate: sample rate must be positive");
  if (snr_min_db > snr_max_db) throw ConfigError("simulate: snr_min exceeds snr_max");
  if (rir_prob < 0 || rir_prob > 1 || perturb_prob < 0 || perturb_prob > 1) {
    throw ConfigError("simulate: probabilities must lie in [0, 1]");
  }
  if (rir_prob > 0 && rir_paths.empty()) {
    throw ConfigError("simulate: rir_prob > 0 needs at least one RIR file");
  }
  try {
    perturb.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("simulate: ") + e.what());
  }
}

DatasetEntry simulate_entry(const SimulateConfig& cfg, std::uint64_t stream,
                            std::size_t index, const std::vector<Waveform>& rirs) {
  auto rng = entry_rng(cfg.seed, stream, index);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto kind = static_cast<SignalKind>(rng() % 3);
  const auto noise_kind = static_cast<NoiseKind>(rng() % 3);
  const std::uint64_t clean_seed = rng(), noise_seed = rng(), perturb_seed = rng();
  const double snr = cfg.snr_min_db + (cfg.snr_max_db - cfg.snr_min_db) * u(rng);
  const bool reverb = !rirs.empty() && u(rng) < cfg.rir_prob;
  const std::size_t rir_index = rirs.empty() ? 0 : rng() % rirs.size();
  const bool perturbed = u(rng) < cfg.perturb_prob;

  const Waveform dry = synth_clean(kind, cfg.duration_s, clean_seed, cfg.sample_rate);
  // Noise length is independent of the clean length so the loop point varies.
  const Waveform noise =
      synth_noise(noise_kind, cfg.duration_s * 1.37, noise_seed, cfg.sample_rate);
  const Waveform source = reverb ? convolve_rir(dry, rirs[rir_index]) : dry;
  Mixture mix = mix_at_snr(source, noise, snr);

  DatasetEntry e;
  Waveform target = dry;
  for (double& v : target.samples) v *= mix.peak_gain;
  e.degraded = std::move(mix.mixture);
  if (perturbed) {
    PerturbConfig p = cfg.perturb;
    p.seed = perturb_seed;
    e.degraded = perturb_spectrogram(e.degraded, StftConfig::for_sample_rate(cfg.sample_rate), p);
    target.samples.resize(e.degraded.size());
  }
  e.label = proxy_label(target, e.degraded);
  e.clean = std::move(target);
  e.meta.snr_db = snr;
  e.meta.perturbed = perturbed;
  e.meta.reverberant = reverb;
  e.meta.origin = to_string(kind);
  return e;
}

std::vector<DatasetEntry> simulate_dataset(const SimulateConfig& cfg, std::uint64_t stream) {
  cfg.validate();
  std::vector<Waveform> rirs;
  for (const auto& p : cfg.rir_paths) {
    Waveform r = load_wav(p);
    if (r.sample_rate != cfg.sample_rate) {
      throw DataError("RIR '" + p.string() + "' is " + std::to_string(r.sample_rate) +
                      " Hz, expected " + std::to_string(cfg.sample_rate));
    }
    rirs.push_back(std::move(r));
  }
  std::vector<DatasetEntry> out;
  out.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) out.push_back(simulate_entry(cfg, stream, i, rirs));
  return out;
}

std::vector<DatasetEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest '" + path.string() + "'");
  const auto base = path.parent_path();
  std::string header;
  if (!std::getline(in, header) || header.find_first_not_of(" \t\r") == std::string::npos) {
    log_warning("manifest '" + path.string() + "' is empty");
    return {};
  }
  const char sep = header.find('\t') != std::string::npos ? '\t' : ',';
  const auto cols = split_fields(header, sep);
  auto column = [&](const std::string& name) -> int {
    const auto it = std::find(cols.begin(), cols.end(), name);
    return it == cols.end() ? -1 : static_cast<int>(it - cols.begin());
  };
  const int c_deg = column("degraded_path"), c_clean = column("clean_path"),
            c_label = column("label"), c_snr = column("snr_db");
  if (c_deg < 0 || c_label < 0) {
    throw DataError("manifest '" + path.string() +
                    "' header must name degraded_path and label columns");
  }

  std::vector<DatasetEntry> entries;
  std::vector<std::string> problems;
  std::string line;
  for (int line_no = 2; std::getline(in, line); ++line_no) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_fields(line, sep);
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    auto field = [&](int c) { return c >= 0 && c < static_cast<int>(f.size()) ? f[c] : std::string(); };
    try {
      const std::string deg = field(c_deg), lab = field(c_label);
      if (deg.empty() || lab.empty()) throw DataError("missing degraded_path or label");
      std::size_t used = 0;
      double label = 0;
      try {
        label = std::stod(lab, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != lab.size()) throw DataError("label '" + lab + "' is not a number");
      if (!(label >= kScoreMin && label <= kScoreMax)) {
        throw DataError("label " + lab + " outside [-0.5, 4.5]");
      }
      DatasetEntry e;
      e.label = QualityScore(label);
      auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
      };
      e.degraded = load_wav(resolve(deg));
      if (const std::string clean = field(c_clean); !clean.empty()) {
        e.clean = load_wav(resolve(clean));
        if (e.clean->sample_rate != e.degraded.sample_rate) {
          throw DataError("clean and degraded sample rates differ");
        }
      }
      if (const std::string snr = field(c_snr); !snr.empty()) e.meta.snr_db = std::stod(snr);
      e.meta.origin = deg;
      entries.push_back(std::move(e));
    } catch (const std::exception& ex) {
      problems.push_back(where + ex.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "manifest '" + path.string() + "' has " +
                      std::to_string(problems.size()) + " bad record(s):";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DataError(msg);
  }
  if (entries.empty()) log_warning("manifest '" + path.string() + "' has no records");
  return entries;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
  out << "degraded_path\tclean_path\tlabel\tsnr_db\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.degraded_path << '\t' << r.clean_path << '\t' << r.label << '\t';
    if (r.snr_db) out << *r.snr_db;
    out << '\n';
  }
  if (!out) throw DataError("short write to manifest '" + path.string() + "'");
}

}  // namespace metricnet
