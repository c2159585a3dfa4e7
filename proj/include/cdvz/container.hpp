#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cdvz/scfv.hpp"
#include "cdvz/transform_coding.hpp"

namespace cdvz {

inline constexpr char kContainerMagic[5] = {'C', 'D', 'V', 'Z', '1'};
inline constexpr std::size_t kContainerHeaderBytes = 24;
inline constexpr std::size_t kContainerTrailerBytes = 4;

// One encoded image: the global signature plus the packed local codes.
// Global and local payloads together fit the mode budget; the fixed header
// and checksum sit outside the budget.
struct EncodedImage {
  int mode_id = 0;
  int width = 0, height = 0;
  std::uint32_t model_crc = 0;
  SCFVDescriptor global_desc;
  std::vector<TernaryCode> codes;
};

std::vector<std::uint8_t> serialize_container(const EncodedImage& enc);
EncodedImage parse_container(const std::vector<std::uint8_t>& bytes);

void save_container(const EncodedImage& enc, const std::filesystem::path& path);
EncodedImage load_container(const std::filesystem::path& path);

}  // namespace cdvz
