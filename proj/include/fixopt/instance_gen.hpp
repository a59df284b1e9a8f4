#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fixopt/config.hpp"
#include "fixopt/problem.hpp"
#include "fixopt/rng.hpp"

namespace fixopt::harness {

inline constexpr double kFeasibilityTol = 1e-10;

namespace detail {

// Positive unit vector: componentwise |N(0,1)| draws, then normalized.
inline Vec positive_unit(RngStream& rng, std::size_t n) {
  Vec c(n);
  for (double& v : c) v = std::abs(rng.standard_normal());
  double r = norm(c);
  while (r == 0.0) {
    for (double& v : c) v = std::abs(rng.standard_normal());
    r = norm(c);
  }
  return scale(std::move(c), 1.0 / r);
}

inline ConvexFn abs_objective(double a, double b, std::size_t coord, std::size_t dim,
                              ObjectiveInterpretation interp, RngStream& rng) {
  if (interp == ObjectiveInterpretation::coordinate)
    return ConvexFn::abs_affine(a, b, static_cast<int>(coord));
  // |a<u,x> + b| as the sum of two hinges along a random unit direction.
  Vec u = rng.unit_sphere(dim);
  Vec neg = scale(u, -a);
  Vec pos = scale(std::move(u), a);
  return ConvexFn::sum({ConvexFn::affine_hinge(std::move(pos), b),
                        ConvexFn::affine_hinge(std::move(neg), -b)});
}

inline double max_constraint_value(const ProblemInstance& inst, const Vec& x) {
  double worst = -1e300;
  for (const UserSpec& u : inst.users) {
    const auto* sp = u.mapping.stored().get_if<QneMapping::SubgradientProjection>();
    if (sp == nullptr) continue;
    worst = std::max(worst, sp->g.value(x));
  }
  return worst;
}

}  // namespace detail

// Searches for a point with every constraint value <= tol: a directed guess
// along -1/sqrt(I), then cyclic subgradient projections as a fallback.
inline std::optional<Vec> certify_feasible(const ProblemInstance& inst, double C,
                                           double tol = kFeasibilityTol) {
  const std::size_t N = inst.dimension;

  // Directed construction: x = -t * 1/sqrt(N) with t just large enough for
  // every halfspace-like constraint, if that stays inside the ball.
  double t = 0.0;
  bool directed_ok = true;
  for (const UserSpec& u : inst.users) {
    const auto* sp = u.mapping.stored().get_if<QneMapping::SubgradientProjection>();
    if (sp == nullptr) {
      directed_ok = false;
      break;
    }
    if (const auto* h = sp->g.get_if<ConvexFn::AffineHinge>()) {
      double csum = 0.0;
      for (double v : h->c) csum += v;
      if (csum <= 0.0) {
        directed_ok = false;
        break;
      }
      t = std::max(t, std::sqrt(static_cast<double>(N)) * h->d / csum);
    }
  }
  if (directed_ok) {
    t *= 1.0 + 1e-9;
    if (t <= 2.0 * C) {
      Vec x(N, -t / std::sqrt(static_cast<double>(N)));
      if (detail::max_constraint_value(inst, x) <= tol) return x;
    }
  }

  // Cyclic subgradient projections from the origin.
  Vec x = zeros(N);
  SubgradientCtx pure{TieRule::zero, nullptr, nullptr};
  for (int sweep = 0; sweep < 4000; ++sweep) {
    for (const UserSpec& u : inst.users) x = u.mapping.base_evaluate(x, &pure);
    if (detail::max_constraint_value(inst, x) <= tol * 0.1) return x;
  }
  if (detail::max_constraint_value(inst, x) <= tol) return x;
  return std::nullopt;
}

// Random multi-user instance over sublevel sets: user 1 owns the norm
// constraint ||x|| <= 2C, the others one random halfspace hinge each; all
// constraint mappings are subgradient projections relaxed with weight 1/2,
// safeguarded by the ball Y of radius 2C.
inline ProblemInstance generate_instance(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::size_t I = cfg.I;
  const std::size_t N = I;
  const double root_c = std::pow(cfg.C, 1.0 / static_cast<double>(I));

  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    const std::uint64_t master = derive_seed(derive_seed(cfg.seed, "instance"), attempt);
    RngStream cons_rng(derive_seed(master, "constraints"));
    RngStream obj_rng(derive_seed(master, "objectives"));

    ProblemInstance inst;
    inst.dimension = N;
    inst.seed = cfg.seed;
    inst.c_param = cfg.C;
    const ClosedConvexSet Y = ClosedConvexSet::ball(zeros(N), 2.0 * cfg.C);

    std::vector<ConvexFn> constraints;
    constraints.push_back(ConvexFn::norm_shift(1.0, -2.0 * cfg.C));
    for (std::size_t i = 1; i < I; ++i) {
      Vec c = detail::positive_unit(cons_rng, N);
      const double d = cons_rng.uniform(-root_c, root_c);
      constraints.push_back(ConvexFn::affine_hinge(std::move(c), d));
    }

    for (std::size_t i = 0; i < I; ++i) {
      const double a = 100.0 * (1.0 - obj_rng.uniform01());  // (0, 100]
      ConvexFn objective = ConvexFn::zero();
      if (i == 0 && cfg.objective_family == ObjectiveFamily::strongly_convex_first) {
        Vec shift(N);
        for (double& v : shift) v = obj_rng.uniform(-100.0, 100.0);
        objective = ConvexFn::strongly_convex_quadratic(a, std::move(shift));
      } else {
        const double b = obj_rng.uniform(-100.0, 100.0);
        objective = detail::abs_objective(a, b, i, N, cfg.objective_interpretation, obj_rng);
      }
      inst.users.push_back(UserSpec{
          std::move(objective),
          RelaxedMapping::relax(QneMapping::subgradient_projection(constraints[i]), 0.5), Y});
    }

    if (std::optional<Vec> feasible = certify_feasible(inst, cfg.C)) {
      inst.feasible_point = std::move(feasible);
      return inst;
    }
  }
  throw generation_error("instance generation: feasibility certification failed 100 times");
}

}  // namespace fixopt::harness
