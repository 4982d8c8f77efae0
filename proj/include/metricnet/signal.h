#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace metricnet {

/// Mono audio with its sample rate. Samples are nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Throws std::invalid_argument if the waveform is empty, has a
/// non-positive rate, or holds NaN/Inf samples.
void validate(const Waveform& w);

/// Framing parameters of the STFT encoder/decoder. Analysis and synthesis
/// both use a periodic square-root Hann window, which is COLA at 50% overlap.
struct StftConfig {
  int window_len = 512;
  int hop_len = 256;
  int fft_len = 512;

  /// 32 ms window, 16 ms hop at the given rate.
  static StftConfig for_sample_rate(int sample_rate);

  int num_bins() const { return fft_len / 2 + 1; }
  /// Frame count for a signal of `num_samples`; the partial tail is dropped.
  int num_frames(std::size_t num_samples) const;
  /// Output length of istft for `num_frames` frames.
  std::size_t synthesis_length(int num_frames) const;

  std::vector<double> window() const;
  /// Constant overlap-add gain sum_j w[n + j*hop]^2, averaged over n.
  double cola_gain() const;

  /// Throws std::invalid_argument unless hop = window/2 and fft_len >= window.
  void validate() const;
};

/// F x T complex matrix, stored frequency-major: data[f * frames + t].
class ComplexSpectrogram {
 public:
  ComplexSpectrogram() = default;
  ComplexSpectrogram(int bins, int frames)
      : bins_(bins), frames_(frames),
        data_(static_cast<std::size_t>(bins) * frames) {}

  int bins() const { return bins_; }
  int frames() const { return frames_; }

  std::complex<double>& at(int f, int t) {
    return data_[static_cast<std::size_t>(f) * frames_ + t];
  }
  const std::complex<double>& at(int f, int t) const {
    return data_[static_cast<std::size_t>(f) * frames_ + t];
  }
  std::span<std::complex<double>> data() { return data_; }
  std::span<const std::complex<double>> data() const { return data_; }

 private:
  int bins_ = 0;
  int frames_ = 0;
  std::vector<std::complex<double>> data_;
};

/// Real-input DFT of a fixed length. Radix-2 FFT when the length is a power
/// of two, direct evaluation against a precomputed kernel table otherwise.
class RealDft {
 public:
  explicit RealDft(int length);

  int length() const { return n_; }
  int num_bins() const { return n_ / 2 + 1; }

  /// out[k] = sum_n in[n] exp(-2 pi i k n / N), k = 0..N/2.
  void forward(std::span<const double> in,
               std::span<std::complex<double>> out) const;
  /// Inverse of forward for Hermitian spectra, 1/N normalised. Imaginary
  /// parts of the DC and Nyquist bins are ignored.
  void inverse(std::span<const std::complex<double>> in,
               std::span<double> out) const;

 private:
  void transform(std::vector<std::complex<double>>& buf, bool inverse) const;

  int n_;
  bool pow2_;
  std::vector<std::complex<double>> twiddle_;  // exp(-2 pi i k / N)
  std::vector<int> bitrev_;
};

/// Frame t is the DFT of window * x[t*hop, t*hop + window_len).
ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg);

/// Windowed overlap-add synthesis divided by the COLA gain. Output length is
/// (T-1)*hop + window_len.
Waveform istft(const ComplexSpectrogram& s, const StftConfig& cfg,
               int sample_rate);

inline constexpr double kLpsFloor = 1e-12;

/// ln(max(|Y|^2, 1e-12)), F x T row-major.
std::vector<double> lps(const ComplexSpectrogram& s);

}  // namespace metricnet
