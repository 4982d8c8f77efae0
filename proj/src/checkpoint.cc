#include "metricnet/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "metricnet/errors.h"

namespace metricnet {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'M', 'N', 'E', 'T', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  Reader(std::istream& in, const std::filesystem::path& path)
      : in_(in), path_(path) {}

  template <typename T>
  T get() {
    T v;
    read(&v, sizeof(T));
    return v;
  }

  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) throw DataError("truncated checkpoint '" + path_.string() + "'");
  }

  std::string string(std::size_t n) {
    if (n > (1u << 26)) throw DataError("corrupt checkpoint '" + path_.string() + "'");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

 private:
  std::istream& in_;
  const std::filesystem::path& path_;
};

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ostringstream header;
  for (const auto& [k, v] : ckpt.header) {
    if (k.find_first_of("=\n") != std::string::npos ||
        v.find('\n') != std::string::npos) {
      throw std::invalid_argument("checkpoint header entry '" + k + "' is not encodable");
    }
    header << k << '=' << v << '\n';
  }
  const std::string h = header.str();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, h.size());
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    put<std::uint64_t>(out, ckpt.tensors.size());
    for (const auto& t : ckpt.tensors) {
      if (t.values.size() != numel(t.shape)) {
        throw ShapeError("checkpoint tensor " + t.name + " has inconsistent shape");
      }
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
      out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
      for (auto d : t.shape) put<std::uint64_t>(out, d);
      out.write(reinterpret_cast<const char*>(t.values.data()),
                static_cast<std::streamsize>(t.values.size() * sizeof(float)));
    }
    if (!out) throw DataError("short write to checkpoint '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  Reader r(in, path);
  char magic[8];
  r.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("'" + path.string() + "' is not a checkpoint file");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint '" + path.string() + "' has unsupported version " +
                    std::to_string(version));
  }
  Checkpoint ckpt;
  std::istringstream header(r.string(r.get<std::uint64_t>()));
  for (std::string line; std::getline(header, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    ckpt.header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.string(r.get<std::uint32_t>());
    const auto ndim = r.get<std::uint32_t>();
    if (ndim > 8) throw DataError("corrupt tensor rank in '" + path.string() + "'");
    for (std::uint32_t d = 0; d < ndim; ++d) {
      t.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    }
    const std::size_t n = numel(t.shape);
    if (n > (std::size_t{1} << 32)) {
      throw DataError("corrupt tensor size in '" + path.string() + "'");
    }
    t.values.resize(n);
    r.read(t.values.data(), n * sizeof(float));
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

}  // namespace metricnet
