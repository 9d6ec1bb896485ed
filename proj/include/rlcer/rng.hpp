#pragma once

#include <cstdint>
#include <random>

// Deterministic seeding and portable uniform draws. std::mt19937_64 has a
// standard-defined output sequence, but the standard <random> distributions
// do not, so all mappings from raw engine output to values live here.
namespace rlcer::rng {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Order-sensitive combination of seed material into a substream key.
inline std::uint64_t mix(std::uint64_t h) { return splitmix64(h); }

template <class... Rest>
std::uint64_t mix(std::uint64_t h, std::uint64_t next, Rest... rest) {
  return mix(splitmix64(h ^ (next + kGolden)), rest...);
}

inline std::mt19937_64 engine_from(std::uint64_t seed) {
  return std::mt19937_64(splitmix64(seed));
}

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Unbiased uniform index in [0, n) via rejection.
inline std::size_t uniform_index(std::mt19937_64& eng, std::size_t n) {
  const std::uint64_t bound = n;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = eng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

inline bool bernoulli(std::mt19937_64& eng, double p) {
  return uniform01(eng) < p;
}

}  // namespace rlcer::rng
