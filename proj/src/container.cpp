#include "cdvz/container.hpp"

#include <fstream>

#include "cdvz/common.hpp"

namespace cdvz {

namespace {

void push_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void push_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint16_t get_u16(const std::vector<std::uint8_t>& b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
         (static_cast<std::uint32_t>(b[off + 2]) << 16) |
         (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> serialize_container(const EncodedImage& enc) {
  const ModeSpec& mode = mode_by_id(enc.mode_id);
  const auto global_bytes = serialize_scfv(enc.global_desc);
  const auto local_bytes = pack_local(enc.codes, mode);
  if (global_bytes.size() + local_bytes.size() > mode.budget_bytes)
    throw DataError("encoded payload exceeds the mode budget");
  if (enc.width < 1 || enc.width > 0xFFFF || enc.height < 1 || enc.height > 0xFFFF)
    throw DataError("image dimensions do not fit the container header");
  if (enc.global_desc.n_components < 1 || enc.global_desc.n_components > 0xFFFF)
    throw DataError("component count does not fit the container header");

  std::vector<std::uint8_t> out;
  out.reserve(kContainerHeaderBytes + global_bytes.size() + local_bytes.size() +
              kContainerTrailerBytes);
  out.insert(out.end(), kContainerMagic, kContainerMagic + 5);
  out.push_back(static_cast<std::uint8_t>(enc.mode_id));
  push_u16(out, static_cast<std::uint16_t>(enc.width));
  push_u16(out, static_cast<std::uint16_t>(enc.height));
  push_u16(out, static_cast<std::uint16_t>(enc.global_desc.n_components));
  push_u32(out, enc.model_crc);
  push_u32(out, static_cast<std::uint32_t>(global_bytes.size()));
  push_u32(out, static_cast<std::uint32_t>(local_bytes.size()));
  out.insert(out.end(), global_bytes.begin(), global_bytes.end());
  out.insert(out.end(), local_bytes.begin(), local_bytes.end());
  push_u32(out, crc32(out.data(), out.size()));
  return out;
}

EncodedImage parse_container(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kContainerHeaderBytes + kContainerTrailerBytes)
    throw DataError("container truncated");
  for (int i = 0; i < 5; ++i)
    if (bytes[static_cast<std::size_t>(i)] != static_cast<std::uint8_t>(kContainerMagic[i]))
      throw DataError("container magic mismatch");

  const std::size_t body = bytes.size() - kContainerTrailerBytes;
  const std::uint32_t stored_crc = get_u32(bytes, body);
  if (crc32(bytes.data(), body) != stored_crc) throw DataError("container checksum mismatch");

  EncodedImage enc;
  enc.mode_id = bytes[5];
  const ModeSpec& mode = mode_by_id(enc.mode_id);
  enc.width = get_u16(bytes, 6);
  enc.height = get_u16(bytes, 8);
  const int n_components = get_u16(bytes, 10);
  enc.model_crc = get_u32(bytes, 12);
  const std::size_t global_len = get_u32(bytes, 16);
  const std::size_t local_len = get_u32(bytes, 20);
  if (kContainerHeaderBytes + global_len + local_len != body)
    throw DataError("container section lengths disagree with its size");

  const std::vector<std::uint8_t> global_bytes(
      bytes.begin() + static_cast<std::ptrdiff_t>(kContainerHeaderBytes),
      bytes.begin() + static_cast<std::ptrdiff_t>(kContainerHeaderBytes + global_len));
  const std::vector<std::uint8_t> local_bytes(
      bytes.begin() + static_cast<std::ptrdiff_t>(kContainerHeaderBytes + global_len),
      bytes.begin() + static_cast<std::ptrdiff_t>(body));

  enc.global_desc = parse_scfv(global_bytes, n_components, mode.variance_planes);
  enc.codes = unpack_local(local_bytes);
  return enc;
}

void save_container(const EncodedImage& enc, const std::filesystem::path& path) {
  const auto bytes = serialize_container(enc);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write container: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

EncodedImage load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read container: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_container(bytes);
}

}  // namespace cdvz
