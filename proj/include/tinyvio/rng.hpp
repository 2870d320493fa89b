#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "tinyvio/common.hpp"

// Deterministic random number helpers. std::*_distribution is
// implementation-defined, so all sampling goes through the explicit
// transforms below; only the bit-exact mt19937_64 engine comes from the
// standard library.

namespace tinyvio {

inline double uniform01(std::mt19937_64& eng) {
  // 53-bit mantissa uniform in [0, 1)
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& eng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(eng);
}

inline double normal(std::mt19937_64& eng) {
  // Box-Muller, stateless (one sample per call, second branch discarded)
  double u1 = uniform01(eng);
  double u2 = uniform01(eng);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Counter-based generator keyed by (seed, stream). Draws are a pure
// function of (key, counter), so per-frame noise can be evaluated in any
// order and still be bit-identical to a sequential pass.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(splitmix64(seed ^ splitmix64(stream ^ 0xA02B'DBF7'BB3C'0A7ULL))) {}

  std::uint64_t next_u64() { return splitmix64(key_ ^ splitmix64(counter_++)); }

  double next01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next01(); }

  double next_normal() {
    double u1 = next01();
    double u2 = next01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Stable hash of integer lattice coordinates, used by the procedural
// textures in the renderer.
inline double lattice_hash01(std::uint64_t seed, std::int64_t ix, std::int64_t iy, std::int64_t iz) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(ix) * 0x8DA6B343ULL);
  h = splitmix64(h ^ static_cast<std::uint64_t>(iy) * 0xD8163841ULL);
  h = splitmix64(h ^ static_cast<std::uint64_t>(iz) * 0xCB1AB31FULL);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace tinyvio
