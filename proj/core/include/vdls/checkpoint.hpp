#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "vdls/tensor.hpp"

namespace vdls {

/// One named tensor record of a checkpoint file.
struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

inline constexpr char kCheckpointMagic[4] = {'V', 'D', 'L', 'S'};
inline constexpr uint32_t kCheckpointVersion = 1;

/// Layout (all integers little-endian):
///   "VDLS" | u32 version | repeated { u32 name_len | name bytes | u32 rank |
///   u64 extent * rank | f32 value * prod(extents) } until end of file.
void write_checkpoint(std::ostream& out, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> load_checkpoint(const std::filesystem::path& path);

/// Hex FNV-1a digest of the checkpoint bytes; used as a checkpoint id.
std::string checkpoint_digest(const std::vector<TensorRecord>& records);
/// 64-bit FNV-1a of `bytes` as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// `<stem><ext>` for an artifact stem; a stem already ending in .vdls or
/// .json has that extension replaced.
std::filesystem::path artifact_path(const std::filesystem::path& stem, const char* ext);

}  // namespace vdls
