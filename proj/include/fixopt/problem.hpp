#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fixopt/convex_fn.hpp"
#include "fixopt/convex_set.hpp"
#include "fixopt/errors.hpp"
#include "fixopt/mapping.hpp"
#include "fixopt/vec.hpp"

namespace fixopt {

// One user: private objective f, relaxed constraint mapping Q_a, and an
// optional simple bounded safeguard set containing Fix(Q).
struct UserSpec {
  ConvexFn objective;
  RelaxedMapping mapping;
  std::optional<ClosedConvexSet> safeguard;
};

enum class ReferenceMethod { analytic, grid_oracle, long_run };

inline const char* to_string(ReferenceMethod m) {
  switch (m) {
    case ReferenceMethod::analytic: return "analytic";
    case ReferenceMethod::grid_oracle: return "grid_oracle";
    default: return "long_run";
  }
}

struct ReferenceSolution {
  double f_star = 0.0;
  std::optional<Vec> x_star;
  ReferenceMethod method = ReferenceMethod::analytic;
  bool self_consistent = true;  // meaningful for long_run only
};

// The full multi-user problem: minimize sum_i f_i over the intersection of
// the users' fixed point sets.
struct ProblemInstance {
  std::vector<UserSpec> users;
  std::size_t dimension = 0;
  std::optional<ReferenceSolution> reference;

  // Replay metadata filled by generators; not required for solving.
  std::optional<Vec> feasible_point;
  std::uint64_t seed = 0;
  double c_param = 0.0;

  std::size_t user_count() const { return users.size(); }

  double objective_total(const Vec& x) const {
    double s = 0.0;
    for (const UserSpec& u : users) s += u.objective.value(x);
    return s;
  }

  void validate() const {
    if (users.empty()) throw invalid_input("instance: needs at least one user");
    if (dimension == 0) throw invalid_input("instance: dimension must be positive");
    for (const UserSpec& u : users) {
      const double a = u.mapping.alpha();
      if (!(a > 0.0 && a < 1.0))
        throw invalid_input("instance: user relaxation weight must be in (0,1)");
      if (u.safeguard && u.safeguard->dimension() != dimension)
        throw dimension_mismatch("instance: safeguard dimension mismatch");
    }
  }
};

}  // namespace fixopt
