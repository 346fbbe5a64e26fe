#pragma once

#include <cmath>
#include <cstdint>

namespace anyshot {

// Counter-based randomness: every draw is a pure function of (seed, stream
// identifiers), so generation order and parallelism cannot change results.
// Built on splitmix64 finalizers over the mixed key.

inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t rng_u64(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  uint64_t h = mix64(seed);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return h;
}

// uniform double in [0, 1)
inline double rng_uniform(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  return static_cast<double>(rng_u64(seed, a, b, c) >> 11) * 0x1.0p-53;
}

inline double rng_uniform_in(double lo, double hi, uint64_t seed, uint64_t a,
                             uint64_t b = 0, uint64_t c = 0) {
  return lo + (hi - lo) * rng_uniform(seed, a, b, c);
}

// standard normal via Box-Muller; the pair (a,b,c) identifies the draw
inline double rng_normal(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  const double u1 = rng_uniform(seed, a, b, c ^ 0x5555555555555555ULL);
  const double u2 = rng_uniform(seed, a, b, c ^ 0xaaaaaaaaaaaaaaaaULL);
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  return r * std::cos(6.283185307179586476925286766559 * u2);
}

inline int rng_index(int n, uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  return static_cast<int>(rng_u64(seed, a, b, c) % static_cast<uint64_t>(n));
}

}  // namespace anyshot
