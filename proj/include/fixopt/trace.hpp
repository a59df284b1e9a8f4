#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fixopt/problem.hpp"
#include "fixopt/schedule.hpp"
#include "fixopt/vec.hpp"

namespace fixopt {

enum class Method { parallel, incremental, ism };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::parallel: return "parallel";
    case Method::incremental: return "incremental";
    default: return "ism";
  }
}

inline Method method_from_string(const std::string& s) {
  if (s == "parallel") return Method::parallel;
  if (s == "incremental") return Method::incremental;
  if (s == "ism") return Method::ism;
  throw invalid_input("unknown method: " + s);
}

inline double quiet_nan() { return std::numeric_limits<double>::quiet_NaN(); }

// One iteration of a run. `x` is the shared iterate x_n, `per_user` the
// points x_n^(i) produced from it during iteration n. For the ring method
// `chain_inputs[i]` is the point user i+1 read (chain_inputs[0] == x).
struct IterationState {
  std::int64_t n = 0;
  Vec x;
  std::vector<Vec> per_user;
  std::vector<Vec> chain_inputs;
  double lambda = 0.0;
  std::vector<SubgradientSample> subgradient_log;  // objective subgradients g_n^(i)
  std::vector<SubgradientSample> constraint_log;   // oracle calls made inside mappings
};

// Per-iteration scalars, always retained regardless of the state cap.
struct MetricRow {
  std::int64_t n = 0;
  double lambda = 0.0;
  double D = 0.0;  // sum_i ||x_n - Q^(i)(x_n)||
  double F = 0.0;  // sum_i f^(i)(x_n^(i))
  std::int64_t elapsed_ns = 0;
  double lemma1_slack = quiet_nan();
  double lemma2_slack = quiet_nan();
  double monitor_scale = quiet_nan();  // 1 + ||x_n - x_ref||^2, tolerance scale
  std::vector<double> residuals;        // per-user ||x_n - Q^(i)(x_n)||
  std::vector<double> chain_residuals;  // ring method: residual at the chain input
  std::vector<double> chain_dist_X;     // ring method: d(chain input, X), oracle runs only
  double f_xn = 0.0;
  double dist_X = quiet_nan();  // d(x_n, X) when an X-distance oracle is set
};

// Running bounds observed along a run. M* belong to the broadcast method,
// N* to the ring method; the pair not in use stays NaN. All are suprema over
// the trajectory, applied retrospectively when checking inequalities.
struct BoundConstants {
  double M1 = quiet_nan();  // max_i sup_n ||subdiff f_i(Q_a(x_n))||^2
  double M2 = quiet_nan();  // max_i sup_n ||subdiff f_i(x_n)||
  double N1 = quiet_nan();
  double N2 = quiet_nan();
  double M3 = quiet_nan();
  double N3 = quiet_nan();
  double M_lambda = quiet_nan();
  double N_lambda = quiet_nan();
  std::vector<double> beta;  // per-user running max d(x,X)/||x - Q_a(x)||
};

enum class RunStatus { ok, diverged };

struct MessageSummary {
  std::int64_t iterate_messages = 0;
  std::int64_t average_messages = 0;
};

struct RunTrace {
  Method method = Method::parallel;
  std::size_t user_count = 0;
  std::size_t dimension = 0;
  std::vector<double> alphas;
  StepSchedule schedule = StepSchedule::constant(1e-3);
  std::uint64_t seed = 0;
  bool projected = true;
  Vec x0;
  std::int64_t n_iters = 0;

  std::vector<MetricRow> rows;
  std::vector<IterationState> states;  // retained for n <= retain cap
  BoundConstants constants;
  MessageSummary messages;

  RunStatus status = RunStatus::ok;
  std::int64_t diverged_at = -1;

  std::optional<double> f_ref;  // f at the monitor reference point, if any
  std::optional<double> f_star;
  std::optional<double> d0;  // d(x_0, X) when an oracle was available

  std::size_t length() const { return rows.size(); }
};

}  // namespace fixopt
