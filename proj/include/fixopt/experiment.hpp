#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fixopt/config.hpp"
#include "fixopt/instance_gen.hpp"
#include "fixopt/metrics.hpp"
#include "fixopt/reference.hpp"
#include "fixopt/serialize.hpp"
#include "fixopt/solver.hpp"
#include "fixopt/topology.hpp"

namespace fixopt::harness {

struct AggregateRow {
  std::int64_t n = 0;
  double elapsed_ns_mean = 0.0;
  double D = 0.0;
  double F = 0.0;
};

struct ExperimentResult {
  std::filesystem::path dir;
  ProblemInstance instance;
  std::vector<AggregateRow> aggregate;
  std::vector<RunTrace> traces;
  bool monitors_clean = true;
  std::vector<std::string> files;
};

// Detects the cases where an exact distance-to-X oracle exists: every user's
// relaxed mapping targets the same single projection set, or the constraint
// family is a single ball sublevel set.
inline std::optional<DistanceOracle> detect_distance_oracle(const ProblemInstance& inst) {
  std::optional<ClosedConvexSet> common;
  for (const UserSpec& u : inst.users) {
    const auto* mp = u.mapping.stored().get_if<QneMapping::MetricProjection>();
    if (mp == nullptr) return std::nullopt;
    if (!common) {
      common = mp->set;
    } else {
      // require bitwise-identical ball parameters
      const auto* a = common->get_if<ClosedConvexSet::Ball>();
      const auto* b = mp->set.get_if<ClosedConvexSet::Ball>();
      if (a == nullptr || b == nullptr || a->radius != b->radius || a->center != b->center)
        return std::nullopt;
    }
  }
  if (!common || common->get_if<ClosedConvexSet::Ball>() == nullptr) return std::nullopt;
  return DistanceOracle{*common};
}

inline std::string render_aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream out;
  out << "n,elapsed_ns_mean,D,F\n";
  for (const AggregateRow& r : rows)
    out << r.n << "," << io::fmt(r.elapsed_ns_mean) << "," << io::fmt(r.D) << ","
        << io::fmt(r.F) << "\n";
  return out.str();
}

inline std::string render_verdicts_csv(const std::vector<metrics::RateRow>& rows) {
  std::ostringstream out;
  out << "n,which,bound,observed,verdict\n";
  for (const metrics::RateRow& r : rows)
    out << r.n << "," << r.which << "," << io::fmt(r.bound) << "," << io::fmt(r.observed)
        << "," << metrics::to_string(r.verdict) << "\n";
  return out.str();
}

inline std::string gnuplot_script(const std::string& metric, const std::string& csv,
                                  int value_col) {
  std::ostringstream out;
  out << "set datafile separator ','\n";
  out << "set logscale y\n";
  out << "set grid\n";
  out << "set terminal png size 900,600\n";
  out << "set output '" << metric << "_vs_iterations.png'\n";
  out << "set xlabel 'iteration n'\n";
  out << "set ylabel '" << metric << "_n'\n";
  out << "plot '" << csv << "' using 1:" << value_col << " with lines title '" << metric
      << "'\n";
  out << "set output '" << metric << "_vs_time.png'\n";
  out << "set xlabel 'elapsed (op-ns)'\n";
  out << "plot '" << csv << "' using 2:" << value_col << " with lines title '" << metric
      << "'\n";
  return out.str();
}

// Batch runner: one generated instance, n_initial_points seeded starts, the
// chosen method for each, then aggregated measures and CSV/plot emission.
// Every output byte is a function of (config, seed); wall-clock timing, when
// requested, goes to a separate sidecar flagged in the manifest.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;

  ExperimentResult result;
  result.dir = fs::path(cfg.output_dir);
  fs::create_directories(result.dir / "traces");

  result.instance = generate_instance(cfg);
  const ProblemInstance& inst = result.instance;
  if (inst.dimension <= 2) {
    try {
      result.instance.reference = reference_solve(inst);
    } catch (const unsupported_instance&) {
    }
  }

  const std::optional<DistanceOracle> oracle = detect_distance_oracle(inst);
  const ClosedConvexSet ball_y = ClosedConvexSet::ball(zeros(inst.dimension), 2.0 * cfg.C);

  std::vector<double> wall_ns_mean;
  const int S = cfg.n_initial_points;
  for (int s = 0; s < S; ++s) {
    RngStream x0_rng(derive_seed(derive_seed(cfg.seed, "x0"), static_cast<std::uint64_t>(s)));
    const Vec x0 = x0_rng.in_ball(zeros(inst.dimension), 2.0 * cfg.C, inst.dimension);

    SolveOptions opts;
    opts.projected = cfg.projected;
    opts.tie_rule = cfg.tie_rule;
    opts.seed = derive_seed(derive_seed(cfg.seed, "run"), static_cast<std::uint64_t>(s));
    opts.retain_states_cap = 0;
    opts.workers = cfg.workers;
    opts.dist_oracle = oracle;
    if (cfg.method == Method::ism) opts.ism_ball = ball_y;
    if (cfg.method != Method::ism && inst.feasible_point)
      opts.monitors.feasible_ref = inst.feasible_point;

    const auto wall_start = std::chrono::steady_clock::now();
    RunTrace trace = run(inst, cfg.method, cfg.schedule, x0, cfg.n_iters, opts);
    const auto wall_end = std::chrono::steady_clock::now();
    if (trace.status != RunStatus::ok) result.monitors_clean = false;
    if (inst.reference) trace.f_star = inst.reference->f_star;

    if (cfg.wall_clock) {
      const double total_ns = static_cast<double>(
          std::chrono::duration_cast<std::chrono::nanoseconds>(wall_end - wall_start).count());
      const double per_row = total_ns / static_cast<double>(trace.rows.size());
      if (wall_ns_mean.empty()) wall_ns_mean.assign(trace.rows.size(), 0.0);
      for (std::size_t n = 0; n < trace.rows.size(); ++n)
        wall_ns_mean[n] += per_row * static_cast<double>(n + 1) / static_cast<double>(S);
    }

    char name[64];
    std::snprintf(name, sizeof(name), "trace_%03d.csv", s);
    io::write_text((result.dir / "traces" / name).string(), io::render_trace_csv(trace));
    result.files.push_back(std::string("traces/") + name);
    result.traces.push_back(std::move(trace));
  }

  // Aggregate D_n / F_n over the initial points, plus the deterministic
  // operation-count time axis. A diverged run leaves a short trace; in that
  // case the aggregate is skipped and the manifest flags the partial output.
  bool complete = true;
  const std::size_t len = result.traces.front().length();
  for (const RunTrace& t : result.traces)
    if (t.length() != len || t.status != RunStatus::ok) complete = false;
  if (complete) {
    const std::vector<double> D = metrics::metric_D(result.traces);
    const std::vector<double> F = metrics::metric_F(result.traces);
    for (std::size_t n = 0; n < len; ++n) {
      AggregateRow row;
      row.n = static_cast<std::int64_t>(n);
      double e = 0.0;
      for (const RunTrace& t : result.traces) e += static_cast<double>(t.rows[n].elapsed_ns);
      row.elapsed_ns_mean = e / static_cast<double>(result.traces.size());
      row.D = D[n];
      row.F = F[n];
      result.aggregate.push_back(row);
    }
  } else {
    result.monitors_clean = false;
  }

  // Lemma monitor verdict rows: worst slack across the batch per iteration.
  std::vector<metrics::RateRow> verdicts;
  if (cfg.method != Method::ism && inst.feasible_point) {
    for (std::size_t n = 0; n + 1 < len; ++n) {
      for (int which = 1; which <= 2; ++which) {
        metrics::RateRow r;
        r.n = static_cast<std::int64_t>(n);
        r.which = which == 1 ? "lemma1" : "lemma2";
        double worst = 1e300;
        double worst_scale = 1.0;
        for (const RunTrace& t : result.traces) {
          const double s =
              which == 1 ? t.rows[n].lemma1_slack : t.rows[n].lemma2_slack;
          if (s < worst) {
            worst = s;
            worst_scale = t.rows[n].monitor_scale;
          }
        }
        r.observed = worst;
        r.bound = -metrics::kSlackTol * worst_scale;
        r.verdict = worst >= r.bound ? metrics::Verdict::pass : metrics::Verdict::fail;
        if (r.verdict == metrics::Verdict::fail) result.monitors_clean = false;
        verdicts.push_back(r);
      }
    }
  }

  io::write_text((result.dir / "instance.json").string(), io::to_json(inst).dump(2) + "\n");
  result.files.push_back("instance.json");
  io::write_text((result.dir / "config_resolved.toml").string(), render_config(cfg));
  result.files.push_back("config_resolved.toml");
  if (complete) {
    io::write_text((result.dir / "aggregate.csv").string(),
                   render_aggregate_csv(result.aggregate));
    result.files.push_back("aggregate.csv");
  }
  io::write_text((result.dir / "verdicts.csv").string(), render_verdicts_csv(verdicts));
  result.files.push_back("verdicts.csv");
  io::write_text((result.dir / "plot_D.gp").string(), gnuplot_script("D", "aggregate.csv", 3));
  result.files.push_back("plot_D.gp");
  io::write_text((result.dir / "plot_F.gp").string(), gnuplot_script("F", "aggregate.csv", 4));
  result.files.push_back("plot_F.gp");

  // One simulated communication round, as an observable record of the
  // topology traffic the method generates each iteration.
  if (cfg.method != Method::ism) {
    const auto topo = cfg.method == Method::parallel ? net::Topology::broadcast(inst.user_count())
                                                     : net::Topology::ring(inst.user_count());
    net::MessageLog log;
    IterationState state;
    state.n = 0;
    state.x = zeros(inst.dimension);
    SolveOptions opts;
    opts.projected = cfg.projected;
    opts.tie_rule = cfg.tie_rule;
    opts.seed = derive_seed(cfg.seed, "messages");
    net::simulate_round(topo, inst, state, cfg.schedule, opts, log);
    io::write_text((result.dir / "messages_round0.csv").string(),
                   io::render_message_log_csv(log));
    result.files.push_back("messages_round0.csv");
  }

  std::vector<std::string> nondeterministic;
  if (cfg.wall_clock) {
    std::ostringstream out;
    out << "n,wall_ns_mean\n";
    for (std::size_t n = 0; n < wall_ns_mean.size(); ++n)
      out << n << "," << io::fmt(wall_ns_mean[n]) << "\n";
    io::write_text((result.dir / "timings_wall.csv").string(), out.str());
    result.files.push_back("timings_wall.csv");
    nondeterministic.push_back("timings_wall.csv");
  }

  io::json manifest = {{"format", "fixopt-experiment-v1"},
                       {"config", render_config(cfg)},
                       {"files", result.files},
                       {"complete", complete},
                       {"monitors_clean", result.monitors_clean},
                       {"nondeterministic_outputs", nondeterministic},
                       {"n_traces", S}};
  io::write_text((result.dir / "manifest.json").string(), manifest.dump(2) + "\n");
  result.files.push_back("manifest.json");
  return result;
}

}  // namespace fixopt::harness
