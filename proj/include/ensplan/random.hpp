#pragma once

#include <cstdint>
#include <random>

namespace ensplan {

using Rng = std::mt19937_64;

// Independent stream for one concern (env resets, masks, tie breaks, ...),
// derived from the run seed so that adding draws to one stream never shifts
// another.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return Rng(mix(mix(seed) ^ (stream * 0xd1b54a32d192ed03ULL)));
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace ensplan
