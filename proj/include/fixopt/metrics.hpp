#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fixopt/solver.hpp"
#include "fixopt/trace.hpp"

namespace fixopt::metrics {

inline constexpr double kSlackTol = 1e-9;

inline bool slack_ok(double slack, double scale) {
  return slack >= -kSlackTol * (1.0 + scale);
}

// D_n and F_n across a batch of traces of equal length (the per-seed mean of
// the per-trace sums stored in the rows).
inline std::vector<double> metric_D(const std::vector<RunTrace>& traces) {
  if (traces.empty()) throw invalid_input("metric_D: no traces");
  const std::size_t len = traces.front().length();
  for (const RunTrace& t : traces)
    if (t.length() != len) throw invalid_input("metric_D: trace lengths differ");
  std::vector<double> out(len, 0.0);
  for (const RunTrace& t : traces)
    for (std::size_t n = 0; n < len; ++n) out[n] += t.rows[n].D;
  for (double& v : out) v /= static_cast<double>(traces.size());
  return out;
}

inline std::vector<double> metric_F(const std::vector<RunTrace>& traces) {
  if (traces.empty()) throw invalid_input("metric_F: no traces");
  const std::size_t len = traces.front().length();
  for (const RunTrace& t : traces)
    if (t.length() != len) throw invalid_input("metric_F: trace lengths differ");
  std::vector<double> out(len, 0.0);
  for (const RunTrace& t : traces)
    for (std::size_t n = 0; n < len; ++n) out[n] += t.rows[n].F;
  for (double& v : out) v /= static_cast<double>(traces.size());
  return out;
}

// Same measures recomputed from retained full states; used to cross-check
// the stored rows.
inline std::vector<double> metric_D_from_states(const std::vector<RunTrace>& traces,
                                                const ProblemInstance& inst) {
  std::vector<double> out;
  SubgradientCtx pure{TieRule::zero, nullptr, nullptr};
  for (const RunTrace& t : traces) {
    if (out.empty()) out.assign(t.states.size(), 0.0);
    if (t.states.size() != out.size())
      throw invalid_input("metric_D_from_states: retained state counts differ");
    for (std::size_t n = 0; n < t.states.size(); ++n) {
      double d = 0.0;
      for (const UserSpec& u : inst.users)
        d += dist(t.states[n].x, u.mapping.base_evaluate(t.states[n].x, &pure));
      out[n] += d;
    }
  }
  for (double& v : out) v /= static_cast<double>(traces.size());
  return out;
}

struct SlackPair {
  double lemma_i = 0.0;
  double lemma_ii = 0.0;
  double scale = 0.0;  // 1 + ||x_n - x_ref||^2, the tolerance scale
};

namespace detail {

inline void require_feasible_ref(const ProblemInstance& inst, const Vec& x_ref) {
  SubgradientCtx pure{TieRule::zero, nullptr, nullptr};
  for (const UserSpec& u : inst.users) {
    const double res =
        u.mapping.base_residual_from_relaxed(u.mapping.fixed_point_residual(x_ref, &pure));
    if (!(res <= 1e-8))
      throw invalid_input("lemma check: reference point is not feasible");
  }
}

}  // namespace detail

// Per-iteration inequality for the broadcast method, evaluated on a stored
// state pair with the trajectory-wide constants. Returns RHS - LHS for both
// forms; nonnegative (within tolerance) on clean runs.
inline SlackPair check_lemma_parallel(const ProblemInstance& inst, const IterationState& s_n,
                                      const IterationState& s_np1,
                                      const BoundConstants& constants, const Vec& x_ref) {
  detail::require_feasible_ref(inst, x_ref);
  const double I = static_cast<double>(inst.user_count());
  const double lambda = s_n.lambda;
  const double dn = dist_sq(s_n.x, x_ref);
  const double dnp1 = dist_sq(s_np1.x, x_ref);

  SubgradientCtx pure{TieRule::zero, nullptr, nullptr};
  double aw = 0.0, ip = 0.0, relax_sum = 0.0;
  for (std::size_t i = 0; i < inst.users.size(); ++i) {
    const UserSpec& u = inst.users[i];
    const double relaxed = u.mapping.fixed_point_residual(s_n.x, &pure);
    const double base = u.mapping.base_residual_from_relaxed(relaxed);
    const double a = u.mapping.alpha();
    aw += a * (1.0 - a) * base * base;
    relax_sum += relaxed;
    ip += dot(sub(s_n.x, x_ref), s_n.subgradient_log.at(i).subgradient);
  }
  const double f_ref = inst.objective_total(x_ref);
  const double f_xn = inst.objective_total(s_n.x);

  SlackPair out;
  out.scale = 1.0 + dn;
  out.lemma_i = dn - (2.0 / I) * aw + 2.0 * constants.M1 * lambda * lambda
                - (2.0 * lambda / I) * ip - dnp1;
  out.lemma_ii = dn + 2.0 * constants.M1 * lambda * lambda
                 + (2.0 * lambda / I) * (f_ref - f_xn)
                 + (2.0 * lambda / I) * (std::sqrt(constants.M1) + constants.M2) * relax_sum
                 - dnp1;
  return out;
}

inline SlackPair check_lemma_incremental(const ProblemInstance& inst, const IterationState& s_n,
                                         const IterationState& s_np1,
                                         const BoundConstants& constants, const Vec& x_ref) {
  detail::require_feasible_ref(inst, x_ref);
  if (s_n.chain_inputs.size() != inst.user_count())
    throw invalid_input("lemma check: state lacks ring chain inputs");
  const double I = static_cast<double>(inst.user_count());
  const double lambda = s_n.lambda;
  const double dn = dist_sq(s_n.x, x_ref);
  const double dnp1 = dist_sq(s_np1.x, x_ref);

  SubgradientCtx pure{TieRule::zero, nullptr, nullptr};
  double aw = 0.0, ip = 0.0, relax_sum = 0.0, mapped_to_x = 0.0;
  for (std::size_t i = 0; i < inst.users.size(); ++i) {
    const UserSpec& u = inst.users[i];
    const Vec& chain = s_n.chain_inputs[i];
    const Vec mapped = u.mapping.evaluate(chain, &pure);
    const double relaxed = dist(chain, mapped);
    const double base = u.mapping.base_residual_from_relaxed(relaxed);
    const double a = u.mapping.alpha();
    aw += a * (1.0 - a) * base * base;
    relax_sum += relaxed;
    mapped_to_x += dist(mapped, s_n.x);
    ip += dot(sub(chain, x_ref), s_n.subgradient_log.at(i).subgradient);
  }
  const double f_ref = inst.objective_total(x_ref);
  const double f_xn = inst.objective_total(s_n.x);

  SlackPair out;
  out.scale = 1.0 + dn;
  out.lemma_i = dn - 2.0 * aw + 2.0 * I * constants.N1 * lambda * lambda - 2.0 * lambda * ip
                - dnp1;
  out.lemma_ii = dn + 2.0 * lambda * (f_ref - f_xn) + 2.0 * I * constants.N1 * lambda * lambda
                 + 2.0 * lambda
                       * (std::sqrt(constants.N1) * relax_sum + constants.N2 * mapped_to_x)
                 - dnp1;
  return out;
}

enum class RateWhich { cor1, cor2, cor3, cor4 };

inline RateWhich rate_which_from_string(const std::string& s) {
  if (s == "cor1") return RateWhich::cor1;
  if (s == "cor2") return RateWhich::cor2;
  if (s == "cor3") return RateWhich::cor3;
  if (s == "cor4") return RateWhich::cor4;
  throw invalid_input("unknown rate bound: " + s);
}

enum class Verdict { pass, fail, precondition_unmet, unsupported };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::precondition_unmet: return "precondition_unmet";
    default: return "unsupported";
  }
}

struct RateRow {
  std::int64_t n = 0;
  std::string which;
  double bound = 0.0;
  double observed = 0.0;
  Verdict verdict = Verdict::pass;
};

struct RateCheckResult {
  std::vector<RateRow> rows;
  // Smallest n0 such that the objective-gap verdict passes for every
  // n in [n0, end]; -1 when it never settles.
  std::int64_t first_satisfied = -1;
  double derived_constant = quiet_nan();  // M3 or N3 where applicable
};

struct RateInputs {
  std::optional<double> d0;       // d(x_0, X)
  std::vector<double> beta;       // per-user beta; defaults to 1.0
  std::optional<double> f_star;   // overrides trace/reference value
};

namespace detail {

inline bool nonincreasing_so_far(const std::vector<double>& prev, const std::vector<double>& cur) {
  for (std::size_t i = 0; i < cur.size(); ++i)
    if (cur[i] > prev[i] * (1.0 + 1e-12) + 1e-15) return false;
  return true;
}

inline std::int64_t settle_index(const std::vector<RateRow>& rows, const std::string& which) {
  std::int64_t first = -1;
  bool settled = false;
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    if (it->which != which) continue;
    if (it->verdict == Verdict::pass) {
      first = it->n;
      settled = true;
    } else {
      break;
    }
  }
  return settled ? first : -1;
}

}  // namespace detail

// Corollary-style rate bounds checked along a stored trace. Objective-gap
// bounds need a reference optimum; the cor2/cor4 residual bounds also need
// an X-distance oracle recorded in the trace (d0 and per-n distances).
inline RateCheckResult check_rate_bounds(const RunTrace& trace, const BoundConstants& constants,
                                         const ReferenceSolution& ref, RateWhich which,
                                         const RateInputs& extra = {}) {
  RateCheckResult result;
  const double I = static_cast<double>(trace.user_count);
  const double f_star = extra.f_star ? *extra.f_star : ref.f_star;
  const bool parallel_kind = which == RateWhich::cor1 || which == RateWhich::cor2;
  if (parallel_kind && trace.method != Method::parallel)
    throw unsupported_instance("cor1/cor2 apply to traces of the broadcast method");
  if (!parallel_kind && trace.method != Method::incremental)
    throw unsupported_instance("cor3/cor4 apply to traces of the ring method");
  if (trace.rows.size() < 2) return result;

  auto gap_tol = [](double bound) { return kSlackTol * (1.0 + std::abs(bound)); };

  if (which == RateWhich::cor1 || which == RateWhich::cor3) {
    for (const MetricRow& row : trace.rows) {
      RateRow r;
      r.n = row.n;
      r.which = which == RateWhich::cor1 ? "cor1" : "cor3";
      if (which == RateWhich::cor1) {
        r.bound = I * constants.M1 * row.lambda;
      } else {
        r.bound = I * ((I - 1.0) / 2.0 * std::sqrt(constants.N1) * constants.N2 + constants.N1)
                  * row.lambda;
      }
      r.observed = row.f_xn - f_star;
      r.verdict = r.observed <= r.bound + gap_tol(r.bound) ? Verdict::pass : Verdict::fail;
      result.rows.push_back(r);
    }
    result.first_satisfied =
        detail::settle_index(result.rows, which == RateWhich::cor1 ? "cor1" : "cor3");
    return result;
  }

  // cor2 / cor4
  const std::string res_tag = which == RateWhich::cor2 ? "cor2.residual" : "cor4.residual";
  const std::string obj_tag = which == RateWhich::cor2 ? "cor2.objective" : "cor4.objective";
  const bool incremental = which == RateWhich::cor4;
  const double sup_sq = incremental ? constants.N1 : constants.M1;
  const double sup_shared = incremental ? constants.N2 : constants.M2;

  const bool square_summable = trace.schedule.square_summable();
  const std::optional<double> d0 = extra.d0 ? extra.d0 : trace.d0;
  std::vector<double> beta(trace.user_count, 1.0);
  for (std::size_t i = 0; i < extra.beta.size() && i < beta.size(); ++i) beta[i] = extra.beta[i];

  bool supported = square_summable && d0.has_value();
  if (supported) {
    for (const MetricRow& row : trace.rows) {
      if (std::isnan(row.dist_X)) supported = false;
      if (incremental && row.chain_dist_X.size() != trace.user_count) supported = false;
    }
  }
  std::vector<double> denom(trace.user_count, 0.0);
  for (std::size_t i = 0; i < trace.user_count; ++i) {
    const double a = trace.alphas[i];
    const double b2 = beta[i] * beta[i];
    denom[i] = (1.0 - a) * ((b2 + 2.0) * a - b2);
    if (!(a > b2 / (b2 + 2.0))) supported = false;
  }

  if (!supported) {
    for (const MetricRow& row : trace.rows) {
      result.rows.push_back({row.n, res_tag, quiet_nan(), quiet_nan(), Verdict::unsupported});
      result.rows.push_back({row.n, obj_tag, quiet_nan(), quiet_nan(), Verdict::unsupported});
    }
    return result;
  }

  const double sq_inf = trace.schedule.square_sum_infinite();
  double derived = 0.0;
  for (std::size_t i = 0; i < trace.user_count; ++i) {
    const double num = incremental ? (*d0) * (*d0) + 3.0 * I * sup_sq * sq_inf
                                   : (*d0) * (*d0) + 3.0 * sup_sq * sq_inf;
    derived = std::max(derived, num / denom[i]);
  }
  result.derived_constant = derived;

  double lambda_sq_sum = 0.0;
  bool mono_ok = true;
  bool dist_ok = true;
  const std::vector<double>* prev_res = nullptr;
  for (std::size_t n = 0; n < trace.rows.size(); ++n) {
    const MetricRow& row = trace.rows[n];
    lambda_sq_sum += row.lambda * row.lambda;
    const std::vector<double>& res =
        incremental ? row.chain_residuals : row.residuals;
    if (prev_res && !detail::nonincreasing_so_far(*prev_res, res)) mono_ok = false;
    prev_res = &res;
    for (std::size_t i = 0; i < trace.user_count; ++i) {
      const double d = incremental ? row.chain_dist_X[i] : row.dist_X;
      const double relaxed = (1.0 - trace.alphas[i]) * res[i];
      if (d > beta[i] * relaxed + 1e-12 * (1.0 + d)) dist_ok = false;
    }
    const bool pre = mono_ok && dist_ok;

    RateRow rres;
    rres.n = row.n;
    rres.which = res_tag;
    double worst_slack = 1e300;
    for (std::size_t i = 0; i < trace.user_count; ++i) {
      const double num = incremental ? (*d0) * (*d0) + 3.0 * I * sup_sq * lambda_sq_sum
                                     : I * ((*d0) * (*d0) + 3.0 * sup_sq * lambda_sq_sum);
      const double bound = num / (denom[i] * static_cast<double>(n + 1));
      const double observed = res[i] * res[i];
      if (bound - observed < worst_slack) {
        worst_slack = bound - observed;
        rres.bound = bound;
        rres.observed = observed;
      }
    }
    if (!pre)
      rres.verdict = Verdict::precondition_unmet;
    else
      rres.verdict =
          rres.observed <= rres.bound + gap_tol(rres.bound) ? Verdict::pass : Verdict::fail;
    result.rows.push_back(rres);

    RateRow robj;
    robj.n = row.n;
    robj.which = obj_tag;
    const double root = std::sqrt((incremental ? derived : I * derived)
                                  / static_cast<double>(n + 1));
    if (incremental) {
      robj.bound = I * ((std::sqrt(sup_sq) + (I + 1.0) * sup_shared / 2.0) * root
                        + ((I - 1.0) * std::sqrt(sup_sq) * sup_shared / 2.0 + sup_sq)
                              * row.lambda);
    } else {
      robj.bound =
          I * ((std::sqrt(sup_sq) + sup_shared) * root + sup_sq * row.lambda);
    }
    robj.observed = row.f_xn - f_star;
    if (!pre)
      robj.verdict = Verdict::precondition_unmet;
    else
      robj.verdict =
          robj.observed <= robj.bound + gap_tol(robj.bound) ? Verdict::pass : Verdict::fail;
    result.rows.push_back(robj);
  }
  result.first_satisfied = detail::settle_index(result.rows, obj_tag);
  return result;
}

}  // namespace fixopt::metrics
