#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rfenet/autograd.hpp"

namespace rfenet {

/// On-disk layout (little endian):
///   "RFENETCK" | u32 version | u64 architecture hash | u32 len | config text |
///   u32 count | count × (u32 len | name | u32 rows | u32 cols | u8 trainable |
///   rows·cols × f32)
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Mat<float> value;
  bool trainable = true;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t architecture_hash = 0;
  std::string config_text;
  std::vector<CheckpointEntry> entries;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterSet<float>& params,
                     std::uint64_t architecture_hash, const std::string& config_text);

Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into params. Throws CheckpointError when the
/// stored architecture hash differs from `expected_hash` or a parameter is
/// missing or misshapen.
void load_parameters(const Checkpoint& ckpt, ParameterSet<float>& params,
                     std::uint64_t expected_hash);

/// FNV-1a 64 of a file's bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

}  // namespace rfenet
