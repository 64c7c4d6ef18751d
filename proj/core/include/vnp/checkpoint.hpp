#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vnp/optim.hpp"

namespace vnp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout, little-endian throughout:
///   "VNPCKPT\0", u32 version, u64 config length, config bytes, i64 step,
///   parameter records, i64 adam step, first-moment records,
///   second-moment records, u64 FNV-1a hash of everything before it.
/// A record block is u32 count followed by count records of
///   u32 name length, name bytes, u32 rank, u64 dims[rank], f32 data.
struct Checkpoint {
  std::string config_json;
  std::int64_t step = 0;
  ParamStore<float> params;
  AdamState<float> adam;

  bool operator==(const Checkpoint&) const = default;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
/// Throws FormatError on a bad magic, unknown version, truncation or hash mismatch.
Checkpoint deserialize(std::span<const std::uint8_t> bytes);

/// Hex digest of the serialized content (the trailing hash field).
std::string content_hash(const Checkpoint& ckpt);

/// Writes to a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Hash stored in a checkpoint file, verified against its content.
std::string checkpoint_file_hash(const std::filesystem::path& path);

}  // namespace vnp
