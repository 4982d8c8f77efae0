#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "metricnet/tensor.h"

namespace metricnet {

// Binary layout, all integers little-endian:
//   "MNETCKPT" | u32 version | u64 header_len | header (key=value lines)
//   u64 tensor_count | per tensor: u32 name_len | name | u32 ndim |
//   u64 dims[ndim] | float32 values[prod(dims)]
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::map<std::string, std::string> header;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws DataError on unreadable, truncated, or foreign files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace metricnet
