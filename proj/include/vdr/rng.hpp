#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace vdr {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for the stream identified by (seed, key). Streams for different keys
/// are independent of each other and of insertion order.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::string_view key) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (char c : key) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return mix64(seed ^ mix64(h));
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t key) {
  return mix64(seed ^ mix64(key + 0x632BE59BD9B4E019ULL));
}

inline Rng make_rng(std::uint64_t seed, std::string_view key) {
  return Rng(stream_seed(seed, key));
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t key) {
  return Rng(stream_seed(seed, key));
}

}  // namespace vdr
