#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "fixopt/errors.hpp"

namespace fixopt {

// Step-size sequence: either constant lambda, or c/(n+1)^a with a in (0,1].
class StepSchedule {
 public:
  enum class Kind { constant, power };

  static StepSchedule constant(double lambda) {
    if (!(lambda > 0.0)) throw invalid_input("constant schedule: lambda must be positive");
    StepSchedule s;
    s.kind_ = Kind::constant;
    s.c_ = lambda;
    return s;
  }

  static StepSchedule power(double c, double a) {
    if (!(c > 0.0)) throw invalid_input("power schedule: c must be positive");
    if (!(a > 0.0 && a <= 1.0)) throw invalid_input("power schedule: a must be in (0,1]");
    StepSchedule s;
    s.kind_ = Kind::power;
    s.c_ = c;
    s.a_ = a;
    return s;
  }

  Kind kind() const { return kind_; }
  double c() const { return c_; }
  double exponent() const { return a_; }

  double eval(std::int64_t n) const {
    if (n < 0) throw invalid_input("schedule: n must be nonnegative");
    if (kind_ == Kind::constant) return c_;
    return c_ / std::pow(static_cast<double>(n + 1), a_);
  }

  // Whether sum lambda_n^2 converges (needed by the 1/(n+1) rate bounds).
  bool square_summable() const { return kind_ == Kind::power && a_ > 0.5; }

  // sum_{n=0}^inf lambda_n^2; infinity unless square_summable().
  double square_sum_infinite() const {
    if (!square_summable()) return std::numeric_limits<double>::infinity();
    return c_ * c_ * std::riemann_zeta(2.0 * a_);
  }

  std::string describe() const {
    if (kind_ == Kind::constant) return "constant lambda=" + std::to_string(c_);
    return "power c=" + std::to_string(c_) + " a=" + std::to_string(a_);
  }

 private:
  Kind kind_ = Kind::constant;
  double c_ = 1e-3;
  double a_ = 1.0;
};

}  // namespace fixopt
