#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mtlb {

inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

/// Unsigned-byte IDX tensor: big-endian magic, one u32 per dimension, payload.
struct IdxData {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;

  std::uint32_t magic() const { return 0x00000800u | static_cast<std::uint32_t>(dims.size()); }
};

/// Accepts only the 1-D label and 3-D image layouts. Throws FormatError on a
/// bad magic number, a truncated header or payload, or trailing bytes.
IdxData parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx(const IdxData& data);

/// Throws IoError when the file cannot be read.
IdxData read_idx_file(const std::filesystem::path& path);

}  // namespace mtlb
