#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>

#include "nwq/data.hpp"
#include "nwq/error.hpp"

namespace nwq {

namespace {

constexpr std::size_t kHeaderBytes = 24;
constexpr char kMagic[4] = {'N', 'W', 'Q', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes[offset + k]) << (8 * k);
  return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_archive(const FrameArchive& archive) {
  const std::size_t expected = static_cast<std::size_t>(archive.n_frames) * archive.frame_size();
  if (archive.values.size() != expected) {
    throw ContractError("serialize_archive: value count does not match the header dimensions");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 4 * expected);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, archive.n_frames);
  put_u32(out, archive.height);
  put_u32(out, archive.width);
  put_u32(out, archive.steps_per_hour);
  put_u32(out, 0);
  for (float v : archive.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

FrameArchive parse_archive(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw FormatError("NWQ1: truncated magic", bytes.size());
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError("NWQ1: bad magic", 0);
  }
  if (bytes.size() < kHeaderBytes) throw FormatError("NWQ1: truncated header", bytes.size());

  FrameArchive a;
  a.n_frames = get_u32(bytes, 4);
  a.height = get_u32(bytes, 8);
  a.width = get_u32(bytes, 12);
  a.steps_per_hour = get_u32(bytes, 16);
  if (a.height == 0) throw FormatError("NWQ1: zero height", 8);
  if (a.width == 0) throw FormatError("NWQ1: zero width", 12);
  if (a.steps_per_hour == 0) throw FormatError("NWQ1: steps_per_hour must be >= 1", 16);
  if (get_u32(bytes, 20) != 0) throw FormatError("NWQ1: reserved field is not zero", 20);

  // n * H * W * 4 must fit; each factor is < 2^32 so check in two steps.
  const std::uint64_t plane = static_cast<std::uint64_t>(a.height) * a.width;
  constexpr std::uint64_t kLimit = (std::uint64_t{1} << 62) / 4;
  if (a.n_frames != 0 && plane > kLimit / a.n_frames) {
    throw FormatError("NWQ1: dimensions overflow the payload size", 4);
  }
  const std::uint64_t count = plane * a.n_frames;
  const std::uint64_t payload = bytes.size() - kHeaderBytes;
  if (payload < 4 * count) {
    throw FormatError("NWQ1: payload truncated, header declares " + std::to_string(count) +
                          " values but only " + std::to_string(payload) + " bytes follow",
                      bytes.size());
  }
  if (payload > 4 * count) {
    throw FormatError("NWQ1: " + std::to_string(payload - 4 * count) +
                          " trailing bytes after the declared payload",
                      kHeaderBytes + 4 * count);
  }
  a.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    a.values[i] = std::bit_cast<float>(get_u32(bytes, kHeaderBytes + 4 * i));
  }
  return a;
}

void write_archive(const FrameArchive& archive, const std::filesystem::path& path) {
  const auto bytes = serialize_archive(archive);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

FrameArchive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open archive " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_archive(bytes);
}

}  // namespace nwq
