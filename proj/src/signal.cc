#include "metricnet/signal.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace metricnet {

void validate(const Waveform& w) {
  if (w.samples.empty()) throw std::invalid_argument("waveform is empty");
  if (w.sample_rate <= 0) {
    throw std::invalid_argument("sample rate must be positive");
  }
  for (double s : w.samples) {
    if (!std::isfinite(s)) {
      throw std::invalid_argument("waveform contains non-finite samples");
    }
  }
}

StftConfig StftConfig::for_sample_rate(int sample_rate) {
  if (sample_rate <= 0 || sample_rate % 125 != 0) {
    throw std::invalid_argument("sample rate " + std::to_string(sample_rate) +
                                " does not give an integral 16 ms hop");
  }
  StftConfig cfg;
  cfg.hop_len = sample_rate * 16 / 1000;
  cfg.window_len = 2 * cfg.hop_len;
  cfg.fft_len = cfg.window_len;
  return cfg;
}

int StftConfig::num_frames(std::size_t num_samples) const {
  if (num_samples < static_cast<std::size_t>(window_len)) return 0;
  return static_cast<int>((num_samples - window_len) / hop_len) + 1;
}

std::size_t StftConfig::synthesis_length(int frames) const {
  if (frames <= 0) return 0;
  return static_cast<std::size_t>(frames - 1) * hop_len + window_len;
}

std::vector<double> StftConfig::window() const {
  std::vector<double> w(window_len);
  for (int n = 0; n < window_len; ++n) {
    w[n] = std::sqrt(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n /
                                          window_len));
  }
  return w;
}

double StftConfig::cola_gain() const {
  const auto w = window();
  double total = 0.0;
  for (int n = 0; n < hop_len; ++n) {
    for (int m = n; m < window_len; m += hop_len) total += w[m] * w[m];
  }
  return total / hop_len;
}

void StftConfig::validate() const {
  if (window_len <= 0 || hop_len <= 0 || fft_len <= 0) {
    throw std::invalid_argument("STFT sizes must be positive");
  }
  if (window_len != 2 * hop_len) {
    throw std::invalid_argument("hop_len must be exactly window_len / 2");
  }
  if (fft_len != window_len) {
    throw std::invalid_argument("fft_len must equal window_len");
  }
}

RealDft::RealDft(int length) : n_(length), pow2_(std::has_single_bit(
                                               static_cast<unsigned>(length))) {
  if (length <= 0) throw std::invalid_argument("DFT length must be positive");
  twiddle_.resize(n_);
  for (int k = 0; k < n_; ++k) {
    const double a = -2.0 * std::numbers::pi * k / n_;
    twiddle_[k] = {std::cos(a), std::sin(a)};
  }
  if (pow2_) {
    bitrev_.resize(n_);
    int bits = std::countr_zero(static_cast<unsigned>(n_));
    for (int i = 0; i < n_; ++i) {
      int r = 0;
      for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1) << (bits - 1 - b);
      bitrev_[i] = r;
    }
  }
}

void RealDft::transform(std::vector<std::complex<double>>& buf,
                        bool inverse) const {
  if (!pow2_) {
    std::vector<std::complex<double>> out(n_);
    for (int k = 0; k < n_; ++k) {
      std::complex<double> acc = 0.0;
      for (int n = 0; n < n_; ++n) {
        const auto& tw = twiddle_[(static_cast<long>(k) * n) % n_];
        acc += buf[n] * (inverse ? std::conj(tw) : tw);
      }
      out[k] = acc;
    }
    buf.swap(out);
    return;
  }
  for (int i = 0; i < n_; ++i) {
    if (i < bitrev_[i]) std::swap(buf[i], buf[bitrev_[i]]);
  }
  for (int len = 2; len <= n_; len <<= 1) {
    const int half = len / 2;
    const int stride = n_ / len;
    for (int start = 0; start < n_; start += len) {
      for (int j = 0; j < half; ++j) {
        auto tw = twiddle_[j * stride];
        if (inverse) tw = std::conj(tw);
        const auto u = buf[start + j];
        const auto v = buf[start + j + half] * tw;
        buf[start + j] = u + v;
        buf[start + j + half] = u - v;
      }
    }
  }
}

void RealDft::forward(std::span<const double> in,
                      std::span<std::complex<double>> out) const {
  std::vector<std::complex<double>> buf(in.begin(), in.end());
  buf.resize(n_);
  transform(buf, false);
  for (int k = 0; k < num_bins(); ++k) out[k] = buf[k];
}

void RealDft::inverse(std::span<const std::complex<double>> in,
                      std::span<double> out) const {
  std::vector<std::complex<double>> buf(n_);
  const int bins = num_bins();
  for (int k = 0; k < bins; ++k) buf[k] = in[k];
  buf[0].imag(0.0);
  if (n_ % 2 == 0) buf[n_ / 2].imag(0.0);
  for (int k = bins; k < n_; ++k) buf[k] = std::conj(buf[n_ - k]);
  transform(buf, true);
  for (int n = 0; n < n_; ++n) out[n] = buf[n].real() / n_;
}

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg) {
  cfg.validate();
  const int frames = cfg.num_frames(w.size());
  if (frames < 1) {
    throw std::invalid_argument(
        "waveform of " + std::to_string(w.size()) +
        " samples is shorter than one window (" +
        std::to_string(cfg.window_len) + ")");
  }
  const auto win = cfg.window();
  const RealDft dft(cfg.fft_len);
  ComplexSpectrogram s(cfg.num_bins(), frames);
  std::vector<double> frame(cfg.fft_len, 0.0);
  std::vector<std::complex<double>> bins(cfg.num_bins());
  for (int t = 0; t < frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop_len;
    for (int n = 0; n < cfg.window_len; ++n) {
      frame[n] = win[n] * w.samples[start + n];
    }
    dft.forward(frame, bins);
    for (int f = 0; f < s.bins(); ++f) s.at(f, t) = bins[f];
  }
  return s;
}

Waveform istft(const ComplexSpectrogram& s, const StftConfig& cfg,
               int sample_rate) {
  cfg.validate();
  if (s.bins() != cfg.num_bins()) {
    throw std::invalid_argument(
        "spectrogram has " + std::to_string(s.bins()) + " bins, config expects " +
        std::to_string(cfg.num_bins()));
  }
  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.assign(cfg.synthesis_length(s.frames()), 0.0);
  const auto win = cfg.window();
  const double gain = cfg.cola_gain();
  const RealDft dft(cfg.fft_len);
  std::vector<std::complex<double>> bins(cfg.num_bins());
  std::vector<double> frame(cfg.fft_len);
  for (int t = 0; t < s.frames(); ++t) {
    for (int f = 0; f < s.bins(); ++f) bins[f] = s.at(f, t);
    dft.inverse(bins, frame);
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop_len;
    for (int n = 0; n < cfg.window_len; ++n) {
      out.samples[start + n] += win[n] * frame[n] / gain;
    }
  }
  return out;
}

std::vector<double> lps(const ComplexSpectrogram& s) {
  std::vector<double> out(s.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::log(std::max(std::norm(s.data()[i]), kLpsFloor));
  }
  return out;
}

}  // namespace metricnet
