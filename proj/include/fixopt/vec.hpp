#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fixopt/errors.hpp"

namespace fixopt {

// Dense point/vector in R^N. All solver state uses this alias; operations
// that mix dimensions throw dimension_mismatch.
using Vec = std::vector<double>;

inline void check_same_dim(const Vec& a, const Vec& b) {
  if (a.size() != b.size())
    throw dimension_mismatch("vector dimensions differ: " + std::to_string(a.size()) + " vs "
                             + std::to_string(b.size()));
}

inline double dot(const Vec& a, const Vec& b) {
  check_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_sq(const Vec& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return s;
}

inline double norm(const Vec& a) { return std::sqrt(norm_sq(a)); }

inline double dist(const Vec& a, const Vec& b) {
  check_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double dist_sq(const Vec& a, const Vec& b) {
  check_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline Vec add(Vec a, const Vec& b) {
  check_same_dim(a, b);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline Vec sub(Vec a, const Vec& b) {
  check_same_dim(a, b);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

inline Vec scale(Vec a, double s) {
  for (double& v : a) v *= s;
  return a;
}

// a + s*b
inline Vec axpy(Vec a, double s, const Vec& b) {
  check_same_dim(a, b);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
  return a;
}

inline bool all_finite(const Vec& a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

inline Vec zeros(std::size_t n) { return Vec(n, 0.0); }

inline Vec unit(std::size_t n, std::size_t index, double value = 1.0) {
  Vec e(n, 0.0);
  e.at(index) = value;
  return e;
}

}  // namespace fixopt
