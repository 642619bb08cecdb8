#pragma once

#include <cstdint>
#include <random>

namespace hdccf {

/// Independent 64-bit seed for a named stream below a root seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace stream {
inline constexpr std::uint64_t init = 0;
inline constexpr std::uint64_t sampler = 1;
inline constexpr std::uint64_t evaluation = 2;
inline constexpr std::uint64_t score_dump = 3;
inline constexpr std::uint64_t verifier = 4;
}  // namespace stream

}  // namespace hdccf
