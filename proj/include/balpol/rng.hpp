#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace balpol {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent seeds from coordinates.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = mix64(master);
  for (auto p : parts) h = mix64(h ^ mix64(p));
  return h;
}

/// Uniform integer in [0, bound) by rejection; independent of the standard
/// library's distribution implementation.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::uint64_t(-1) - (std::uint64_t(-1) % bound);
  std::uint64_t v = 0;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline int bernoulli(Rng& rng, double p) { return uniform01(rng) < p ? 1 : 0; }

}  // namespace balpol
