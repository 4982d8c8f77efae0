#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "metricnet/errors.h"
#include "metricnet/signal.h"

namespace metricnet {

class WavError : public DataError {
 public:
  enum class Kind { kMissingFile, kMalformedHeader, kUnsupportedEncoding };

  WavError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct WavInfo {
  int channels = 1;
  int bits_per_sample = 16;
  bool is_float = false;
};

/// Reads a RIFF WAV (16-bit PCM or 32-bit float). Multi-channel files keep
/// the first channel and log a warning.
Waveform load_wav(const std::filesystem::path& path, WavInfo* info = nullptr);

enum class WavEncoding { kPcm16, kFloat32 };

void write_wav(const std::filesystem::path& path, const Waveform& w,
               WavEncoding encoding = WavEncoding::kFloat32);

}  // namespace metricnet
