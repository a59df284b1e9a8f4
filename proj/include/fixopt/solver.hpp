#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "fixopt/problem.hpp"
#include "fixopt/rng.hpp"
#include "fixopt/schedule.hpp"
#include "fixopt/trace.hpp"

namespace fixopt {

// Exact distance to X for the cases where X is a single simple set.
struct DistanceOracle {
  ClosedConvexSet set;
  double operator()(const Vec& x) const { return std::max(0.0, set.violation(x)); }
};

struct MonitorConfig {
  // A verified point of X; enables the per-iteration inequality monitors.
  std::optional<Vec> feasible_ref;
};

struct SolveOptions {
  bool projected = true;
  TieRule tie_rule = TieRule::seeded_uniform;
  std::uint64_t seed = 0;
  MonitorConfig monitors;
  std::optional<ClosedConvexSet> ism_ball;  // Y for the ISM baseline
  std::size_t retain_states_cap = std::numeric_limits<std::size_t>::max();
  int workers = 1;  // fan-out for the broadcast method; output is bit-identical to serial
  std::optional<DistanceOracle> dist_oracle;
};

namespace detail {

inline RngStream tie_stream(std::uint64_t seed, std::size_t user, std::int64_t n) {
  return RngStream(derive_seed(derive_seed(derive_seed(seed, "tie"), user + 1),
                               static_cast<std::uint64_t>(n)));
}

struct UserStepOut {
  Vec mapped;   // Q_a^(i)(input)
  Vec updated;  // x_n^(i)
  SubgradientSample grad;
  std::vector<SubgradientSample> constraint_calls;
  double relax_residual = 0.0;
  std::int64_t ops = 0;
};

// One user update of the subgradient algorithms: relaxed mapping, objective
// subgradient at the mapped point, step, optional safeguard projection.
inline UserStepOut user_update(const UserSpec& u, const Vec& input, double lambda,
                               bool projected, TieRule rule, RngStream& rng) {
  const auto n = static_cast<std::int64_t>(input.size());
  UserStepOut out;
  SubgradientCtx ctx{rule, &rng, &out.constraint_calls};
  out.mapped = u.mapping.evaluate(input, &ctx);
  out.relax_residual = dist(input, out.mapped);
  out.grad = u.objective.subgradient(out.mapped, rule, &rng);
  out.updated = axpy(out.mapped, -lambda, out.grad.subgradient);
  out.ops = 3 * n + 48;
  if (projected && u.safeguard) {
    out.updated = u.safeguard->project(out.updated);
    out.ops += n + 8;
  }
  return out;
}

struct StepOut {
  Vec x_next;
  std::vector<UserStepOut> users;
  std::vector<Vec> chain_inputs;  // ring method only
  std::int64_t ops = 0;
};

// Broadcast step: every user reads the shared x_n; the average is reduced in
// user-index order so that threaded and serial execution agree bitwise.
inline StepOut parallel_step(const ProblemInstance& inst, const Vec& x, std::int64_t n,
                             double lambda, const SolveOptions& opts) {
  const std::size_t I = inst.user_count();
  StepOut out;
  out.users.resize(I);
  auto compute = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      RngStream rng = tie_stream(opts.seed, i, n);
      out.users[i] = user_update(inst.users[i], x, lambda, opts.projected, opts.tie_rule, rng);
    }
  };
  const int workers = std::max(1, opts.workers);
  if (workers == 1 || I < 2) {
    compute(0, I);
  } else {
    const std::size_t chunk = (I + static_cast<std::size_t>(workers) - 1)
                              / static_cast<std::size_t>(workers);
    std::vector<std::future<void>> tasks;
    for (std::size_t lo = 0; lo < I; lo += chunk) {
      const std::size_t hi = std::min(I, lo + chunk);
      tasks.push_back(std::async(std::launch::async, compute, lo, hi));
    }
    for (auto& t : tasks) t.get();
  }
  Vec sum = zeros(x.size());
  for (std::size_t i = 0; i < I; ++i) {
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += out.users[i].updated[k];
    out.ops += out.users[i].ops;
  }
  out.x_next = scale(std::move(sum), 1.0 / static_cast<double>(I));
  out.ops += static_cast<std::int64_t>(I + 1) * static_cast<std::int64_t>(x.size());
  return out;
}

// Ring step: user i reads only user (i-1)'s output; x_{n+1} := x_n^(I).
inline StepOut incremental_step(const ProblemInstance& inst, const Vec& x, std::int64_t n,
                                double lambda, const SolveOptions& opts) {
  const std::size_t I = inst.user_count();
  StepOut out;
  out.users.resize(I);
  out.chain_inputs.reserve(I);
  Vec current = x;
  for (std::size_t i = 0; i < I; ++i) {
    out.chain_inputs.push_back(current);
    RngStream rng = tie_stream(opts.seed, i, n);
    out.users[i] =
        user_update(inst.users[i], current, lambda, opts.projected, opts.tie_rule, rng);
    current = out.users[i].updated;
    out.ops += out.users[i].ops;
  }
  out.x_next = std::move(current);
  return out;
}

// ISM baseline for the sublevel-set problem: a projected subgradient sweep
// followed by a sweep of raw subgradient projections.
inline StepOut ism_step(const ProblemInstance& inst, const Vec& x, std::int64_t n,
                        double lambda, const ClosedConvexSet& outer_ball,
                        const SolveOptions& opts) {
  const std::size_t I = inst.user_count();
  const auto dim_ops = static_cast<std::int64_t>(x.size());
  StepOut out;
  out.users.resize(I);
  out.chain_inputs.reserve(I);
  Vec z = x;
  for (std::size_t i = 0; i < I; ++i) {
    out.chain_inputs.push_back(z);
    RngStream rng = tie_stream(opts.seed, i, n);
    UserStepOut& uo = out.users[i];
    uo.grad = inst.users[i].objective.subgradient(z, opts.tie_rule, &rng);
    uo.updated = outer_ball.project(axpy(z, -lambda, uo.grad.subgradient));
    uo.ops = 2 * dim_ops + 24;
    out.ops += uo.ops;
    z = uo.updated;
  }
  SubgradientCtx pure{TieRule::zero, nullptr, nullptr};
  Vec y = z;
  for (std::size_t i = 0; i < I; ++i) {
    y = inst.users[i].mapping.base_evaluate(y, &pure);
    out.ops += 2 * dim_ops + 32;
  }
  out.x_next = std::move(y);
  return out;
}

inline bool step_is_finite(const StepOut& s) {
  if (!all_finite(s.x_next)) return false;
  for (const UserStepOut& u : s.users)
    if (!all_finite(u.updated)) return false;
  return true;
}

// Accumulators for the per-iteration inequality monitors; scalars only, so
// monitoring does not force full state retention.
struct MonitorSeries {
  std::vector<double> dist_ref_sq;
  std::vector<double> sum_aw_res_sq;      // sum_i a_i (1-a_i) r_i^2 at the monitored points
  std::vector<double> sum_ip_ref;         // sum_i <point_i - ref, g_i>
  std::vector<double> sum_relax_res;      // sum_i ||point_i - Q_a(point_i)||
  std::vector<double> sum_mapped_to_x;    // ring: sum_i ||Q_a(chain_i) - x_n||
};

}  // namespace detail

inline void validate_run_inputs(const ProblemInstance& inst, Method method, const Vec& x0,
                                std::int64_t n_iters, const SolveOptions& opts) {
  inst.validate();
  if (x0.size() != inst.dimension) throw dimension_mismatch("run: x0 dimension mismatch");
  if (!all_finite(x0)) throw invalid_input("run: x0 must be finite");
  if (n_iters < 1) throw invalid_input("run: n_iters must be >= 1");
  if (method == Method::ism) {
    if (!opts.ism_ball && !inst.users.front().safeguard)
      throw config_error("ism: needs an outer ball (none configured, no safeguard)");
    for (const UserSpec& u : inst.users) {
      if (u.mapping.stores_target()
          || u.mapping.stored().get_if<QneMapping::SubgradientProjection>() == nullptr)
        throw unsupported_instance("ism: every user mapping must be a subgradient projection");
    }
  } else if (opts.projected) {
    for (const UserSpec& u : inst.users)
      if (!u.safeguard)
        throw config_error("projected variant requires a safeguard set for every user");
  }
  if (opts.monitors.feasible_ref) {
    const Vec& ref = *opts.monitors.feasible_ref;
    if (ref.size() != inst.dimension)
      throw dimension_mismatch("monitor reference dimension mismatch");
    SubgradientCtx pure{TieRule::zero, nullptr, nullptr};
    for (const UserSpec& u : inst.users) {
      const double res = u.mapping.base_residual_from_relaxed(u.mapping.fixed_point_residual(ref, &pure));
      if (!(res <= 1e-8))
        throw invalid_input("monitor reference point is not feasible (residual > 1e-8)");
    }
  }
}

// Iteration driver. Produces n_iters+1 rows; row n holds x_n together with
// the per-user points computed from it. Deterministic for fixed inputs.
inline RunTrace run(const ProblemInstance& inst, Method method, const StepSchedule& sched,
                    const Vec& x0, std::int64_t n_iters, const SolveOptions& opts) {
  validate_run_inputs(inst, method, x0, n_iters, opts);
  const std::size_t I = inst.user_count();

  RunTrace trace;
  trace.method = method;
  trace.user_count = I;
  trace.dimension = inst.dimension;
  for (const UserSpec& u : inst.users) trace.alphas.push_back(u.mapping.alpha());
  trace.schedule = sched;
  trace.seed = opts.seed;
  trace.projected = opts.projected;
  trace.x0 = x0;
  trace.n_iters = n_iters;
  trace.rows.reserve(static_cast<std::size_t>(n_iters) + 1);

  const ClosedConvexSet* outer_ball = nullptr;
  if (method == Method::ism)
    outer_ball = opts.ism_ball ? &*opts.ism_ball : &*inst.users.front().safeguard;

  const bool monitored = opts.monitors.feasible_ref.has_value() && method != Method::ism;
  const Vec ref = monitored ? *opts.monitors.feasible_ref : Vec();
  if (monitored) trace.f_ref = inst.objective_total(ref);
  if (opts.dist_oracle) trace.d0 = (*opts.dist_oracle)(x0);

  detail::MonitorSeries mon;
  SubgradientCtx pure{TieRule::zero, nullptr, nullptr};
  std::int64_t elapsed = 0;
  double max_g_mapped_sq = 0.0;  // running sup ||subdiff f(Q_a(point))||^2
  double max_g_shared = 0.0;     // running sup ||subdiff f(x_n)||
  std::vector<double> beta_hat(I, 0.0);

  Vec x = x0;
  for (std::int64_t n = 0; n <= n_iters; ++n) {
    const double lambda = sched.eval(n);
    detail::StepOut step;
    switch (method) {
      case Method::parallel: step = detail::parallel_step(inst, x, n, lambda, opts); break;
      case Method::incremental:
        step = detail::incremental_step(inst, x, n, lambda, opts);
        break;
      case Method::ism:
        step = detail::ism_step(inst, x, n, lambda, *outer_ball, opts);
        break;
    }
    elapsed += step.ops;

    MetricRow row;
    row.n = n;
    row.lambda = lambda;
    row.residuals.resize(I);
    row.f_xn = inst.objective_total(x);

    for (std::size_t i = 0; i < I; ++i) {
      const UserSpec& u = inst.users[i];
      double relaxed;
      if (method == Method::parallel) {
        relaxed = step.users[i].relax_residual;
      } else {
        relaxed = u.mapping.fixed_point_residual(x, &pure);
        elapsed += 2 * static_cast<std::int64_t>(x.size()) + 32;
      }
      row.residuals[i] = u.mapping.base_residual_from_relaxed(relaxed);
      row.D += row.residuals[i];
      row.F += u.objective.value(step.users[i].updated);
    }
    row.elapsed_ns = elapsed;
    if (opts.dist_oracle) row.dist_X = (*opts.dist_oracle)(x);

    if (method == Method::incremental) {
      row.chain_residuals.resize(I);
      if (opts.dist_oracle) row.chain_dist_X.resize(I);
      for (std::size_t i = 0; i < I; ++i) {
        const double relaxed = dist(step.chain_inputs[i], step.users[i].mapped);
        row.chain_residuals[i] = inst.users[i].mapping.base_residual_from_relaxed(relaxed);
        if (opts.dist_oracle) row.chain_dist_X[i] = (*opts.dist_oracle)(step.chain_inputs[i]);
      }
    }

    // Running bound constants and monitor scalars.
    if (method != Method::ism) {
      double aw = 0.0, ip = 0.0, relax_sum = 0.0, mapped_to_x = 0.0;
      for (std::size_t i = 0; i < I; ++i) {
        const UserSpec& u = inst.users[i];
        const double gb = u.objective.subgradient_norm_bound(step.users[i].mapped);
        max_g_mapped_sq = std::max(max_g_mapped_sq, gb * gb);
        const double gs = u.objective.subgradient_norm_bound(x);
        max_g_shared = std::max(max_g_shared, gs);
        const double alpha = u.mapping.alpha();
        const double base_res =
            method == Method::parallel ? row.residuals[i] : row.chain_residuals[i];
        aw += alpha * (1.0 - alpha) * base_res * base_res;
        relax_sum += (1.0 - alpha) * base_res;
        if (monitored) {
          const Vec& point =
              method == Method::parallel ? x : step.chain_inputs[i];
          ip += dot(sub(point, ref), step.users[i].grad.subgradient);
        }
        if (method == Method::incremental) mapped_to_x += dist(step.users[i].mapped, x);
        if (opts.dist_oracle) {
          const Vec& point = method == Method::parallel ? x : step.chain_inputs[i];
          const double d = (*opts.dist_oracle)(point);
          const double relaxed = (1.0 - alpha) * base_res;
          if (relaxed > 1e-300) beta_hat[i] = std::max(beta_hat[i], d / relaxed);
        }
      }
      mon.sum_aw_res_sq.push_back(aw);
      mon.sum_relax_res.push_back(relax_sum);
      mon.sum_mapped_to_x.push_back(mapped_to_x);
      if (monitored) {
        mon.dist_ref_sq.push_back(dist_sq(x, ref));
        mon.sum_ip_ref.push_back(ip);
      }
    }

    if (method == Method::parallel) {
      trace.messages.iterate_messages += static_cast<std::int64_t>(I);
      trace.messages.average_messages += 1;
    } else {
      trace.messages.iterate_messages += static_cast<std::int64_t>(I);
    }

    trace.rows.push_back(std::move(row));

    if (static_cast<std::size_t>(n) <= opts.retain_states_cap) {
      IterationState st;
      st.n = n;
      st.x = x;
      st.lambda = lambda;
      for (auto& uo : step.users) {
        st.per_user.push_back(uo.updated);
        st.subgradient_log.push_back(uo.grad);
        for (auto& cc : uo.constraint_calls) st.constraint_log.push_back(cc);
      }
      st.chain_inputs = step.chain_inputs;
      trace.states.push_back(std::move(st));
    }

    if (!detail::step_is_finite(step)) {
      trace.status = RunStatus::diverged;
      trace.diverged_at = n;
      break;
    }
    if (n < n_iters) x = std::move(step.x_next);
  }

  // Finalize constants and the retrospective inequality slacks.
  if (method == Method::parallel) {
    trace.constants.M1 = max_g_mapped_sq;
    trace.constants.M2 = max_g_shared;
  } else if (method == Method::incremental) {
    trace.constants.N1 = max_g_mapped_sq;
    trace.constants.N2 = max_g_shared;
  }
  trace.constants.beta = beta_hat;

  if (monitored && trace.rows.size() >= 2) {
    const double Id = static_cast<double>(I);
    double m_lambda = 0.0;
    for (std::size_t n = 0; n < mon.dist_ref_sq.size(); ++n) {
      const double lambda = sched.eval(static_cast<std::int64_t>(n));
      if (method == Method::parallel)
        m_lambda = std::max(m_lambda,
                            trace.constants.M1 * lambda + std::abs(mon.sum_ip_ref[n]) / Id);
      else
        m_lambda = std::max(m_lambda, Id * trace.constants.N1 * lambda
                                          + std::abs(mon.sum_ip_ref[n]));
    }
    if (method == Method::parallel)
      trace.constants.M_lambda = m_lambda;
    else
      trace.constants.N_lambda = m_lambda;

    for (std::size_t n = 0; n + 1 < trace.rows.size(); ++n) {
      const double lambda = sched.eval(static_cast<std::int64_t>(n));
      const double d_n = mon.dist_ref_sq[n];
      const double d_np1 = mon.dist_ref_sq[n + 1];
      const double f_gap = *trace.f_ref - trace.rows[n].f_xn;
      double s1, s2;
      if (method == Method::parallel) {
        const double M1 = trace.constants.M1;
        const double M2 = trace.constants.M2;
        s1 = d_n - (2.0 / Id) * mon.sum_aw_res_sq[n] + 2.0 * M1 * lambda * lambda
             - (2.0 * lambda / Id) * mon.sum_ip_ref[n] - d_np1;
        s2 = d_n + 2.0 * M1 * lambda * lambda + (2.0 * lambda / Id) * f_gap
             + (2.0 * lambda / Id) * (std::sqrt(M1) + M2) * mon.sum_relax_res[n] - d_np1;
      } else {
        const double N1 = trace.constants.N1;
        const double N2 = trace.constants.N2;
        s1 = d_n - 2.0 * mon.sum_aw_res_sq[n] + 2.0 * Id * N1 * lambda * lambda
             - 2.0 * lambda * mon.sum_ip_ref[n] - d_np1;
        s2 = d_n + 2.0 * lambda * f_gap + 2.0 * Id * N1 * lambda * lambda
             + 2.0 * lambda
                   * (std::sqrt(N1) * mon.sum_relax_res[n] + N2 * mon.sum_mapped_to_x[n])
             - d_np1;
      }
      trace.rows[n].lemma1_slack = s1;
      trace.rows[n].lemma2_slack = s2;
      trace.rows[n].monitor_scale = 1.0 + d_n;
    }
  }
  return trace;
}

// Recomputes one user's update from its input alone, reproducing the exact
// tie-break stream the driver used at iteration n. A stored per-user point
// is fully determined by (instance, user, input, lambda, n, options).
inline Vec replay_user_update(const ProblemInstance& inst, std::size_t user, const Vec& input,
                              double lambda, std::int64_t n, const SolveOptions& opts) {
  RngStream rng = detail::tie_stream(opts.seed, user, n);
  return detail::user_update(inst.users.at(user), input, lambda, opts.projected, opts.tie_rule,
                             rng)
      .updated;
}

// Spec-shaped single-step entry points; the driver above is the normal path.
inline IterationState algorithm1_step(const ProblemInstance& inst, const IterationState& state,
                                      const StepSchedule& sched, bool projected,
                                      std::uint64_t seed = 0,
                                      TieRule rule = TieRule::seeded_uniform) {
  SolveOptions opts;
  opts.projected = projected;
  opts.seed = seed;
  opts.tie_rule = rule;
  if (projected)
    for (const UserSpec& u : inst.users)
      if (!u.safeguard) throw config_error("projected variant requires safeguards");
  const double lambda = sched.eval(state.n);
  detail::StepOut step = detail::parallel_step(inst, state.x, state.n, lambda, opts);
  if (!detail::step_is_finite(step))
    throw invalid_input("divergence: nonfinite iterate at n=" + std::to_string(state.n));
  IterationState next;
  next.n = state.n + 1;
  next.x = step.x_next;
  next.lambda = lambda;
  for (auto& uo : step.users) {
    next.per_user.push_back(uo.updated);
    next.subgradient_log.push_back(uo.grad);
  }
  return next;
}

inline IterationState algorithm2_step(const ProblemInstance& inst, const IterationState& state,
                                      const StepSchedule& sched, bool projected,
                                      std::uint64_t seed = 0,
                                      TieRule rule = TieRule::seeded_uniform) {
  SolveOptions opts;
  opts.projected = projected;
  opts.seed = seed;
  opts.tie_rule = rule;
  if (projected)
    for (const UserSpec& u : inst.users)
      if (!u.safeguard) throw config_error("projected variant requires safeguards");
  const double lambda = sched.eval(state.n);
  detail::StepOut step = detail::incremental_step(inst, state.x, state.n, lambda, opts);
  if (!detail::step_is_finite(step))
    throw invalid_input("divergence: nonfinite iterate at n=" + std::to_string(state.n));
  IterationState next;
  next.n = state.n + 1;
  next.x = step.x_next;
  next.lambda = lambda;
  for (auto& uo : step.users) {
    next.per_user.push_back(uo.updated);
    next.subgradient_log.push_back(uo.grad);
  }
  next.chain_inputs = step.chain_inputs;
  return next;
}

inline IterationState ism_step(const ProblemInstance& inst, const IterationState& state,
                               const StepSchedule& sched, const ClosedConvexSet& outer_ball,
                               std::uint64_t seed = 0,
                               TieRule rule = TieRule::seeded_uniform) {
  SolveOptions opts;
  opts.seed = seed;
  opts.tie_rule = rule;
  opts.ism_ball = outer_ball;
  validate_run_inputs(inst, Method::ism, state.x, 1, opts);
  const double lambda = sched.eval(state.n);
  detail::StepOut step = detail::ism_step(inst, state.x, state.n, lambda, outer_ball, opts);
  if (!detail::step_is_finite(step))
    throw invalid_input("divergence: nonfinite iterate at n=" + std::to_string(state.n));
  IterationState next;
  next.n = state.n + 1;
  next.x = step.x_next;
  next.lambda = lambda;
  for (auto& uo : step.users) {
    next.per_user.push_back(uo.updated);
    next.subgradient_log.push_back(uo.grad);
  }
  next.chain_inputs = step.chain_inputs;
  return next;
}

}  // namespace fixopt
