#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pato {

constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (char c : s) {
    h ^= std::uint64_t(std::uint8_t(c));
    h *= 0x100000001b3ull;
  }
  return h;
}

/// All randomness in a run flows from one user seed; modules draw from named
/// substreams so adding a consumer never perturbs the others.
inline std::uint64_t substream_seed(std::uint64_t runSeed, std::string_view name) {
  std::uint64_t h = fnv1a64(name);
  // splitmix-style finalizer over the combined value
  std::uint64_t x = runSeed ^ h;
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::mt19937_64 substream(std::uint64_t runSeed, std::string_view name) {
  return std::mt19937_64(substream_seed(runSeed, name));
}

}  // namespace pato
