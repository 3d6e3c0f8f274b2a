#include "mtlb/idx.hpp"

#include <fstream>
#include <iterator>
#include <string>

#include "mtlb/errors.hpp"

namespace mtlb {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

IdxData parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw FormatError("idx: stream shorter than the magic number");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxLabelMagic && magic != kIdxImageMagic) {
    throw FormatError("idx: unsupported magic number " + std::to_string(magic));
  }
  const std::size_t ndims = magic & 0xffu;
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header) throw FormatError("idx: truncated header");

  IdxData out;
  std::size_t count = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    out.dims.push_back(read_be32(bytes, 4 + 4 * i));
    count *= out.dims.back();
  }
  const std::size_t available = bytes.size() - header;
  if (available < count) {
    throw FormatError("idx: truncated payload (expected " + std::to_string(count) + " bytes, got " +
                      std::to_string(available) + ")");
  }
  if (available > count) throw FormatError("idx: trailing bytes after payload");
  out.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return out;
}

std::vector<std::uint8_t> serialize_idx(const IdxData& data) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 * data.dims.size() + data.payload.size());
  write_be32(out, data.magic());
  for (auto d : data.dims) write_be32(out, d);
  out.insert(out.end(), data.payload.begin(), data.payload.end());
  return out;
}

IdxData read_idx_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return parse_idx(bytes);
}

}  // namespace mtlb
