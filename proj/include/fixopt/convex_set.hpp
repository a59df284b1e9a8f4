#pragma once

#include <algorithm>
#include <utility>
#include <variant>

#include "fixopt/errors.hpp"
#include "fixopt/vec.hpp"

namespace fixopt {

// Closed convex sets with exact metric projections. The halfspace is
// { x : <normal, x> + offset <= 0 }.
class ClosedConvexSet {
 public:
  struct Ball {
    Vec center;
    double radius;
  };
  struct Halfspace {
    Vec normal;
    double offset;
  };
  struct Box {
    Vec lower;
    Vec upper;
  };

  static constexpr double kDefaultTolerance = 1e-10;

  static ClosedConvexSet ball(Vec center, double radius) {
    if (!(radius > 0.0)) throw invalid_input("ball: radius must be positive");
    return ClosedConvexSet(Ball{std::move(center), radius});
  }

  static ClosedConvexSet halfspace(Vec normal, double offset) {
    if (norm(normal) == 0.0) throw invalid_input("halfspace: zero normal");
    return ClosedConvexSet(Halfspace{std::move(normal), offset});
  }

  static ClosedConvexSet box(Vec lower, Vec upper) {
    check_same_dim(lower, upper);
    for (std::size_t i = 0; i < lower.size(); ++i)
      if (lower[i] > upper[i]) throw invalid_input("box: lower exceeds upper");
    return ClosedConvexSet(Box{std::move(lower), std::move(upper)});
  }

  std::size_t dimension() const {
    if (const Ball* b = std::get_if<Ball>(&data_)) return b->center.size();
    if (const Halfspace* h = std::get_if<Halfspace>(&data_)) return h->normal.size();
    return std::get<Box>(data_).lower.size();
  }

  Vec project(const Vec& x) const {
    if (x.size() != dimension()) throw dimension_mismatch("project: dimension mismatch");
    if (const Ball* b = std::get_if<Ball>(&data_)) {
      const double d = dist(x, b->center);
      if (d <= b->radius) return x;
      Vec p = b->center;
      const double s = b->radius / d;
      for (std::size_t i = 0; i < x.size(); ++i) p[i] += s * (x[i] - b->center[i]);
      return p;
    }
    if (const Halfspace* h = std::get_if<Halfspace>(&data_)) {
      const double t = dot(h->normal, x) + h->offset;
      if (t <= 0.0) return x;
      return axpy(x, -t / norm_sq(h->normal), h->normal);
    }
    const Box& b = std::get<Box>(data_);
    Vec p = x;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::clamp(p[i], b.lower[i], b.upper[i]);
    return p;
  }

  // Signed violation: <= 0 inside, distance-like positive value outside.
  double violation(const Vec& x) const {
    if (x.size() != dimension()) throw dimension_mismatch("violation: dimension mismatch");
    if (const Ball* b = std::get_if<Ball>(&data_)) return dist(x, b->center) - b->radius;
    if (const Halfspace* h = std::get_if<Halfspace>(&data_))
      return (dot(h->normal, x) + h->offset) / norm(h->normal);
    const Box& b = std::get<Box>(data_);
    double worst = -1e300;
    for (std::size_t i = 0; i < x.size(); ++i) {
      worst = std::max(worst, b.lower[i] - x[i]);
      worst = std::max(worst, x[i] - b.upper[i]);
    }
    return worst;
  }

  bool contains(const Vec& x, double tol = kDefaultTolerance) const {
    return violation(x) <= tol;
  }

  double tolerance() const { return tolerance_; }
  void set_tolerance(double tol) { tolerance_ = tol; }

  template <class T>
  const T* get_if() const {
    return std::get_if<T>(&data_);
  }

 private:
  using Data = std::variant<Ball, Halfspace, Box>;
  explicit ClosedConvexSet(Data data) : data_(std::move(data)) {}

  Data data_;
  double tolerance_ = kDefaultTolerance;
};

}  // namespace fixopt
