// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace cred::rng {

using Engine = std::mt19937_64;

// SplitMix64 step, used to derive well-separated seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seed for logical stream `stream` (chain index, replicate index, ...) under
// `master`. Streams are deterministic and do not depend on evaluation order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t s = master;
  std::uint64_t a = splitmix64(s);
  s = master ^ (0x9e3779b97f4a7c15ULL + stream * 0xd1342543de82ef95ULL);
  std::uint64_t b = splitmix64(s);
  return a ^ b;
}

// Uniform on [0, 1), 53-bit resolution.
inline double uniform01(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Uniform on (0, 1]; safe to pass to log().
inline double uniform_pos(Engine& eng) { return 1.0 - uniform01(eng); }

// Standard normal via Box-Muller (cosine branch).
inline double normal01(Engine& eng) {
  double u = uniform_pos(eng);
  double v = uniform01(eng);
  return std::sqrt(-2.0 * std::log(u)) *
         std::cos(2.0 * std::numbers::pi * v);
}

}  // namespace cred::rng
