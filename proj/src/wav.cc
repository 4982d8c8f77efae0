#include "metricnet/wav.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "metricnet/log.h"

namespace metricnet {
namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

std::uint32_t read_u32(const unsigned char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

std::uint16_t read_u16(const unsigned char* p) {
  std::uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

Waveform load_wav(const std::filesystem::path& path, WavInfo* info) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw WavError(WavError::Kind::kMissingFile,
                   "cannot open WAV file '" + path.string() + "'");
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  auto malformed = [&](const std::string& why) {
    return WavError(WavError::Kind::kMalformedHeader,
                    "malformed WAV '" + path.string() + "': " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw malformed("missing RIFF/WAVE signature");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::uint32_t len = read_u32(chunk + 4);
    std::size_t body = pos + 8;
    if (body + len > bytes.size()) {
      // Some writers leave a bogus data length; clamp the final chunk.
      if (std::memcmp(chunk, "data", 4) != 0) throw malformed("truncated chunk");
      len = static_cast<std::uint32_t>(bytes.size() - body);
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16) throw malformed("fmt chunk too short");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format == kFormatExtensible && len >= 26) {
        format = read_u16(bytes.data() + body + 24);
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1u);
  }
  if (channels == 0 || rate == 0) throw malformed("missing or empty fmt chunk");
  if (data == nullptr) throw malformed("missing data chunk");

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) {
    throw WavError(WavError::Kind::kUnsupportedEncoding,
                   "unsupported WAV encoding in '" + path.string() +
                       "': format " + std::to_string(format) + ", " +
                       std::to_string(bits) + " bits");
  }
  if (channels > 1) {
    log_warning("'" + path.string() + "' has " + std::to_string(channels) +
                " channels; keeping the first");
  }

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * bits / 8;
  const std::size_t n = data_len / frame_bytes;
  if (n == 0) throw malformed("no samples");
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* p = data + i * frame_bytes;
    if (pcm16) {
      std::int16_t v;
      std::memcpy(&v, p, 2);
      w.samples[i] = v / 32768.0;
    } else {
      float v;
      std::memcpy(&v, p, 4);
      if (!std::isfinite(v)) throw malformed("non-finite float sample");
      w.samples[i] = v;
    }
  }
  if (info != nullptr) {
    info->channels = channels;
    info->bits_per_sample = bits;
    info->is_float = f32;
  }
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w,
               WavEncoding encoding) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write WAV file '" + path.string() + "'");
  }
  const bool f32 = encoding == WavEncoding::kFloat32;
  const std::uint16_t bits = f32 ? 32 : 16;
  const std::uint32_t data_len =
      static_cast<std::uint32_t>(w.samples.size() * (bits / 8));
  out.write("RIFF", 4);
  put<std::uint32_t>(out, 36 + data_len);
  out.write("WAVEfmt ", 8);
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, f32 ? kFormatFloat : kFormatPcm);
  put<std::uint16_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate) * bits / 8);
  put<std::uint16_t>(out, bits / 8);
  put<std::uint16_t>(out, bits);
  out.write("data", 4);
  put<std::uint32_t>(out, data_len);
  for (double s : w.samples) {
    if (f32) {
      put<float>(out, static_cast<float>(s));
    } else {
      double c = std::clamp(s, -1.0, 32767.0 / 32768.0);
      put<std::int16_t>(out, static_cast<std::int16_t>(std::lround(c * 32768.0)));
    }
  }
  if (!out) throw DataError("short write to '" + path.string() + "'");
}

}  // namespace metricnet
