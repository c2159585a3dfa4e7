#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cdvz {

// Exit-code contract for the CLI: 1 usage, 2 data, 3 internal.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);
std::uint32_t crc32(std::string_view text);

// Reflect-at-edge index for filter boundaries: -1 -> 0, -2 -> 1, n -> n-1.
// Valid for any i (period 2n).
inline std::ptrdiff_t mirror_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n <= 1) return 0;
  const std::ptrdiff_t period = 2 * n;
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

// Shortest decimal that round-trips a double bit-exactly.
std::string format_double(double v);
double parse_double(std::string_view s);

}  // namespace cdvz
