#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "fixopt/vec.hpp"

namespace fixopt {

// Deterministic seeded random streams. Distributions are hand-rolled on top
// of splitmix64 so generated bytes do not depend on the standard library
// implementation. Child streams are derived by hashing (seed, tag) pairs,
// which keeps per-user / per-iteration draws independent of execution order.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) {
  std::uint64_t s = parent ^ (0x9E3779B97F4A7C15ULL + (tag << 1) + (tag >> 3));
  std::uint64_t a = splitmix64(s);
  std::uint64_t b = splitmix64(s);
  return a ^ (b << 1);
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) {
  // FNV-1a over the tag, then mix with the parent.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return derive_seed(parent, h);
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {
    // Warm up so that low-entropy seeds (0, 1, 2, ...) decorrelate.
    splitmix64(state_);
    splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform on [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller; draws two uniforms per normal, no cached spare.
  double standard_normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  Vec gaussian(std::size_t n) {
    Vec v(n);
    for (double& x : v) x = standard_normal();
    return v;
  }

  Vec unit_sphere(std::size_t n) {
    Vec v = gaussian(n);
    double r = norm(v);
    while (r == 0.0) {
      v = gaussian(n);
      r = norm(v);
    }
    return scale(std::move(v), 1.0 / r);
  }

  // Uniform over the closed ball: direction uniform on the sphere, radius
  // scaled by u^(1/n).
  Vec in_ball(const Vec& center, double radius, std::size_t n) {
    Vec v = unit_sphere(n);
    const double r = radius * std::pow(uniform01(), 1.0 / static_cast<double>(n));
    v = scale(std::move(v), r);
    return center.empty() ? v : add(std::move(v), center);
  }

 private:
  std::uint64_t state_;
};

}  // namespace fixopt
