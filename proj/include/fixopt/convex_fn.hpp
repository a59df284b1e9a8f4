#pragma once

#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fixopt/errors.hpp"
#include "fixopt/rng.hpp"
#include "fixopt/vec.hpp"

namespace fixopt {

// Rule for selecting a subgradient where the subdifferential is not a
// singleton. `zero` and `positive` are deterministic; `seeded_uniform` draws
// from the caller-supplied stream and is the experiment default.
enum class TieRule { zero, positive, seeded_uniform };

inline const char* to_string(TieRule r) {
  switch (r) {
    case TieRule::zero: return "zero";
    case TieRule::positive: return "positive";
    default: return "seeded_uniform";
  }
}

enum class Convexity { convex, strictly_convex, strongly_convex };

struct ConvexityClass {
  Convexity kind = Convexity::convex;
  double modulus = 0.0;  // strong-convexity modulus, 0 unless strongly convex
};

struct SubgradientSample {
  Vec at;
  double value = 0.0;
  Vec subgradient;
  bool tie_broken = false;
};

// Convex function oracle: value plus one subgradient per call.
//
// Supported shapes:
//   abs_affine(a, b, j)               x -> |a*x_j + b|
//   affine_hinge(c, d)                x -> max(<c,x> + d, 0)
//   norm_shift(s, o)                  x -> s*||x|| + o
//   strongly_convex_quadratic(a, b)   x -> a*||x + b||^2
//   sum(f_1, ..., f_k)                x -> f_1(x) + ... + f_k(x)
class ConvexFn {
 public:
  struct AbsAffine {
    double a;
    double b;
    int index;
  };
  struct AffineHinge {
    Vec c;
    double d;
  };
  struct NormShift {
    double scale;
    double offset;
  };
  struct Quadratic {
    double a;
    Vec shift;
  };
  struct Sum {
    std::vector<ConvexFn> parts;
  };

  static ConvexFn abs_affine(double a, double b, int index) {
    if (!(a > 0.0)) throw invalid_input("abs_affine: a must be positive");
    if (index < 0) throw invalid_input("abs_affine: index must be nonnegative");
    return ConvexFn(AbsAffine{a, b, index}, {Convexity::convex, 0.0});
  }

  static ConvexFn affine_hinge(Vec c, double d) {
    if (norm(c) == 0.0) throw invalid_input("affine_hinge: zero direction");
    return ConvexFn(AffineHinge{std::move(c), d}, {Convexity::convex, 0.0});
  }

  static ConvexFn norm_shift(double scale, double offset) {
    if (!(scale > 0.0)) throw invalid_input("norm_shift: scale must be positive");
    return ConvexFn(NormShift{scale, offset}, {Convexity::convex, 0.0});
  }

  static ConvexFn strongly_convex_quadratic(double a, Vec shift) {
    if (!(a > 0.0)) throw invalid_input("quadratic: a must be positive");
    return ConvexFn(Quadratic{a, std::move(shift)}, {Convexity::strongly_convex, 2.0 * a});
  }

  static ConvexFn sum(std::vector<ConvexFn> parts) {
    ConvexityClass cls{Convexity::convex, 0.0};
    for (const ConvexFn& p : parts) {
      if (p.convexity().kind == Convexity::strongly_convex) {
        cls.kind = Convexity::strongly_convex;
        cls.modulus += p.convexity().modulus;
      } else if (p.convexity().kind == Convexity::strictly_convex
                 && cls.kind == Convexity::convex) {
        cls.kind = Convexity::strictly_convex;
      }
    }
    return ConvexFn(Sum{std::move(parts)}, cls);
  }

  // The zero function, represented as an empty sum.
  static ConvexFn zero() { return sum({}); }

  double value(const Vec& x) const {
    return std::visit([&](const auto& f) { return value_of(f, x); }, data_);
  }

  SubgradientSample subgradient(const Vec& x, TieRule rule = TieRule::zero,
                                RngStream* rng = nullptr) const {
    SubgradientSample s;
    s.at = x;
    s.subgradient = zeros(x.size());
    s.value = accumulate_subgradient(x, rule, rng, s.subgradient, s.tie_broken);
    return s;
  }

  // sup { ||u|| : u in the subdifferential at x }, exact for elementary
  // shapes, subadditive upper bound for sums.
  double subgradient_norm_bound(const Vec& x) const {
    return std::visit([&](const auto& f) { return bound_of(f, x); }, data_);
  }

  const ConvexityClass& convexity() const { return cls_; }

  bool is_zero() const {
    const Sum* s = std::get_if<Sum>(&data_);
    return s != nullptr && s->parts.empty();
  }

  template <class T>
  const T* get_if() const {
    return std::get_if<T>(&data_);
  }

  const std::variant<AbsAffine, AffineHinge, NormShift, Quadratic, Sum>& data() const {
    return data_;
  }

 private:
  using Data = std::variant<AbsAffine, AffineHinge, NormShift, Quadratic, Sum>;

  ConvexFn(Data data, ConvexityClass cls) : data_(std::move(data)), cls_(cls) {}

  static double value_of(const AbsAffine& f, const Vec& x) {
    if (static_cast<std::size_t>(f.index) >= x.size())
      throw dimension_mismatch("abs_affine: coordinate index out of range");
    return std::abs(f.a * x[static_cast<std::size_t>(f.index)] + f.b);
  }
  static double value_of(const AffineHinge& f, const Vec& x) {
    const double t = dot(f.c, x) + f.d;
    return t > 0.0 ? t : 0.0;
  }
  static double value_of(const NormShift& f, const Vec& x) {
    return f.scale * norm(x) + f.offset;
  }
  static double value_of(const Quadratic& f, const Vec& x) {
    return f.a * dist_sq(x, scale(f.shift, -1.0));
  }
  static double value_of(const Sum& f, const Vec& x) {
    double s = 0.0;
    for (const ConvexFn& p : f.parts) s += p.value(x);
    return s;
  }

  static double bound_of(const AbsAffine& f, const Vec&) { return f.a; }
  static double bound_of(const AffineHinge& f, const Vec& x) {
    const double t = dot(f.c, x) + f.d;
    return t < 0.0 ? 0.0 : norm(f.c);
  }
  static double bound_of(const NormShift& f, const Vec&) { return f.scale; }
  static double bound_of(const Quadratic& f, const Vec& x) {
    return 2.0 * f.a * dist(x, scale(f.shift, -1.0));
  }
  static double bound_of(const Sum& f, const Vec& x) {
    double s = 0.0;
    for (const ConvexFn& p : f.parts) s += p.subgradient_norm_bound(x);
    return s;
  }

  static double tie_scalar(TieRule rule, RngStream* rng, double lo, double hi) {
    switch (rule) {
      case TieRule::zero: return lo <= 0.0 && 0.0 <= hi ? 0.0 : lo;
      case TieRule::positive: return hi;
      default:
        if (rng == nullptr)
          throw invalid_input("seeded_uniform tie rule needs an RNG stream");
        return rng->uniform(lo, hi);
    }
  }

  // Adds one element of the subdifferential at x into `out` and returns the
  // function value; flags whether a nondifferentiability point was hit.
  double accumulate_subgradient(const Vec& x, TieRule rule, RngStream* rng, Vec& out,
                                bool& tie) const {
    if (const AbsAffine* f = std::get_if<AbsAffine>(&data_)) {
      const auto j = static_cast<std::size_t>(f->index);
      if (j >= x.size()) throw dimension_mismatch("abs_affine: coordinate index out of range");
      const double t = f->a * x[j] + f->b;
      if (t > 0.0) {
        out[j] += f->a;
      } else if (t < 0.0) {
        out[j] -= f->a;
      } else {
        tie = true;
        out[j] += tie_scalar(rule, rng, -1.0, 1.0) * f->a;
      }
      return std::abs(t);
    }
    if (const AffineHinge* f = std::get_if<AffineHinge>(&data_)) {
      const double t = dot(f->c, x) + f->d;
      if (t > 0.0) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] += f->c[i];
        return t;
      }
      if (t == 0.0) {
        tie = true;
        const double theta = tie_scalar(rule, rng, 0.0, 1.0);
        for (std::size_t i = 0; i < x.size(); ++i) out[i] += theta * f->c[i];
      }
      return 0.0;
    }
    if (const NormShift* f = std::get_if<NormShift>(&data_)) {
      const double r = norm(x);
      if (r > 0.0) {
        const double s = f->scale / r;
        for (std::size_t i = 0; i < x.size(); ++i) out[i] += s * x[i];
      } else {
        tie = true;
        if (rule == TieRule::seeded_uniform) {
          if (rng == nullptr)
            throw invalid_input("seeded_uniform tie rule needs an RNG stream");
          const Vec u = rng->in_ball(Vec(), f->scale, x.size());
          for (std::size_t i = 0; i < x.size(); ++i) out[i] += u[i];
        }
        // zero / positive: 0 is always a valid choice at the origin.
      }
      return f->scale * r + f->offset;
    }
    if (const Quadratic* f = std::get_if<Quadratic>(&data_)) {
      check_same_dim(x, f->shift);
      double v = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] + f->shift[i];
        v += d * d;
        out[i] += 2.0 * f->a * d;
      }
      return f->a * v;
    }
    const Sum& f = std::get<Sum>(data_);
    double v = 0.0;
    for (const ConvexFn& p : f.parts) v += p.accumulate_subgradient(x, rule, rng, out, tie);
    return v;
  }

  Data data_;
  ConvexityClass cls_;
};

}  // namespace fixopt
