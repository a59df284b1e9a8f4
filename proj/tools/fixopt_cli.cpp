// Command-line front end: batch experiments, property verification, rate
// checks on stored traces, plot script emission, and the reference oracle.
//
// Exit codes: 0 success, 1 verification/monitor failure, 2 configuration or
// usage error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <string>

#include <CLI11.hpp>

#include "fixopt/experiment.hpp"
#include "fixopt/instance_gen.hpp"
#include "fixopt/metrics.hpp"
#include "fixopt/reference.hpp"
#include "fixopt/serialize.hpp"
#include "fixopt/topology.hpp"

namespace fs = std::filesystem;
using namespace fixopt;

namespace {

int cmd_run(const std::string& config_path, const std::string& output_override,
            std::int64_t iters_override, int points_override) {
  harness::ExperimentConfig cfg = harness::parse_config_file(config_path);
  if (!output_override.empty()) cfg.output_dir = output_override;
  if (iters_override > 0) cfg.n_iters = iters_override;
  if (points_override > 0) cfg.n_initial_points = points_override;
  const auto result = harness::run_experiment(cfg);
  std::cout << "wrote " << result.files.size() << " files under " << result.dir.string()
            << "\n";
  std::cout << "monitors_clean=" << (result.monitors_clean ? "true" : "false") << "\n";
  return result.monitors_clean ? 0 : 1;
}

bool verify_geometry(std::uint64_t seed, int samples) {
  RngStream rng(derive_seed(seed, "verify-geometry"));
  int bad = 0;
  const ConvexFn g_ball = ConvexFn::norm_shift(1.0, -4.0);
  const Vec c = rng.unit_sphere(3);
  const ConvexFn g_hinge = ConvexFn::affine_hinge(c, 0.2);
  const auto q_ball = QneMapping::subgradient_projection(g_ball);
  const auto q_hinge = QneMapping::subgradient_projection(g_hinge);
  const auto half = ClosedConvexSet::halfspace(c, 0.2);
  for (int k = 0; k < samples; ++k) {
    const Vec x = rng.in_ball(zeros(3), 10.0, 3);
    const Vec y_ball = rng.in_ball(zeros(3), 4.0, 3);
    const Vec y_half = half.project(rng.in_ball(zeros(3), 10.0, 3));

    struct Case {
      const QneMapping& q;
      const ConvexFn& g;
      const Vec& y;
    };
    for (const Case& cs : {Case{q_ball, g_ball, y_ball}, Case{q_hinge, g_hinge, y_half}}) {
      if (cs.g.value(cs.y) > 0.0) continue;
      const Vec qx = cs.q.evaluate(x);
      const double rhs = dist_sq(x, cs.y);
      if (dist_sq(qx, cs.y) + dist_sq(x, qx) > rhs + 1e-9 * (1.0 + rhs)) ++bad;
      const bool lev = cs.g.value(x) <= 0.0;
      const bool fix = cs.q.fixed_point_residual(x) <= 1e-12 * (1.0 + norm(x));
      if (lev != fix) ++bad;
    }
    for (double alpha : {0.0, 0.25, 0.5, 0.9}) {
      const auto qa = relax(q_ball, alpha);
      const double lhs = dot(sub(x, qa.evaluate(x)), sub(x, y_ball));
      if (lhs < (1.0 - alpha) * dist_sq(x, q_ball.evaluate(x)) - 1e-9) ++bad;
    }
  }
  std::cout << "geometry: " << (bad == 0 ? "ok" : "FAILED") << " (" << samples
            << " samples)\n";
  return bad == 0;
}

bool verify_functions(std::uint64_t seed, int samples) {
  RngStream rng(derive_seed(seed, "verify-functions"));
  std::vector<ConvexFn> fns;
  fns.push_back(ConvexFn::abs_affine(2.5, -1.0, 1));
  fns.push_back(ConvexFn::affine_hinge(rng.unit_sphere(3), 0.4));
  fns.push_back(ConvexFn::norm_shift(2.0, -3.0));
  fns.push_back(ConvexFn::strongly_convex_quadratic(1.7, rng.gaussian(3)));
  int bad = 0;
  for (int k = 0; k < samples; ++k) {
    const ConvexFn& f = fns[static_cast<std::size_t>(k) % fns.size()];
    const Vec x = rng.in_ball(zeros(3), 6.0, 3);
    const auto s = f.subgradient(x, TieRule::seeded_uniform, &rng);
    const Vec y = rng.in_ball(zeros(3), 8.0, 3);
    const double fy = f.value(y);
    if (fy < s.value + dot(sub(y, x), s.subgradient) - 1e-9 * (1.0 + std::abs(fy))) ++bad;
    if (norm(s.subgradient) > f.subgradient_norm_bound(x) + 1e-12) ++bad;
  }
  std::cout << "functions: " << (bad == 0 ? "ok" : "FAILED") << " (" << samples
            << " samples)\n";
  return bad == 0;
}

bool verify_monitors(std::uint64_t seed) {
  harness::ExperimentConfig cfg;
  cfg.I = 2;
  cfg.seed = seed;
  const auto inst = harness::generate_instance(cfg);
  SolveOptions opts;
  opts.seed = derive_seed(seed, "verify-monitor-run");
  opts.monitors.feasible_ref = inst.feasible_point;
  opts.retain_states_cap = 0;
  RngStream rng(derive_seed(seed, "verify-monitor-x0"));
  int bad = 0;
  for (Method m : {Method::parallel, Method::incremental}) {
    const Vec x0 = rng.in_ball(zeros(2), 2.0 * cfg.C, 2);
    const RunTrace t = run(inst, m, StepSchedule::constant(1e-3), x0, 200, opts);
    for (std::size_t n = 0; n + 1 < t.rows.size(); ++n) {
      if (!metrics::slack_ok(t.rows[n].lemma1_slack, t.rows[n].monitor_scale - 1.0)) ++bad;
      if (!metrics::slack_ok(t.rows[n].lemma2_slack, t.rows[n].monitor_scale - 1.0)) ++bad;
    }
  }
  std::cout << "monitors: " << (bad == 0 ? "ok" : "FAILED") << " (fresh runs, 200 iters)\n";
  return bad == 0;
}

int cmd_verify(const std::string& module, std::uint64_t seed, int samples) {
  bool ok = true;
  if (module.empty() || module == "geometry") ok = verify_geometry(seed, samples) && ok;
  if (module.empty() || module == "functions") ok = verify_functions(seed, samples) && ok;
  if (module.empty() || module == "monitors") ok = verify_monitors(seed) && ok;
  return ok ? 0 : 1;
}

int cmd_rate_check(const std::string& trace_path, const std::string& which_str,
                   const std::string& out_path, double f_star_flag) {
  const RunTrace trace = io::trace_from_csv(io::parse_csv(io::read_text(trace_path)));
  const auto which = metrics::rate_which_from_string(which_str);
  ReferenceSolution ref;
  if (!std::isnan(f_star_flag))
    ref.f_star = f_star_flag;
  else if (trace.f_star)
    ref.f_star = *trace.f_star;
  else
    throw config_error("rate-check: no f_star in the trace; pass --f-star");
  const auto result = metrics::check_rate_bounds(trace, trace.constants, ref, which);
  const std::string csv = harness::render_verdicts_csv(result.rows);
  if (out_path.empty())
    std::cout << csv;
  else
    io::write_text(out_path, csv);
  std::size_t fails = 0;
  for (const auto& r : result.rows)
    if (r.verdict == metrics::Verdict::fail) ++fails;
  std::cerr << "first_satisfied=" << result.first_satisfied << " fails=" << fails << "\n";
  return fails == 0 ? 0 : 1;
}

int cmd_plot(const std::string& experiment_dir) {
  const fs::path dir(experiment_dir);
  if (!fs::exists(dir / "aggregate.csv"))
    throw config_error("plot: no aggregate.csv under " + experiment_dir);
  io::write_text((dir / "plot_D.gp").string(),
                 harness::gnuplot_script("D", "aggregate.csv", 3));
  io::write_text((dir / "plot_F.gp").string(),
                 harness::gnuplot_script("F", "aggregate.csv", 4));
  std::cout << "wrote plot_D.gp and plot_F.gp under " << experiment_dir << "\n";
  return 0;
}

int cmd_oracle(const std::string& instance_path, std::int64_t long_run_iters) {
  ProblemInstance inst = io::read_instance(instance_path);
  harness::ReferenceOptions opts;
  if (long_run_iters > 0) opts.long_run_iters = long_run_iters;
  const ReferenceSolution ref = harness::reference_solve(inst, opts);
  std::cout << io::to_json(ref).dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"subgradient methods over fixed point sets: experiment harness"};
  app.require_subcommand(1);

  std::string config_path, output_dir, module, trace_path, which = "cor1", out_path,
                                                           instance_path, experiment_dir;
  std::uint64_t seed = 1;
  int samples = 10000;
  std::int64_t iters_override = -1, long_run_iters = -1;
  int points_override = -1;
  double f_star_flag = std::numeric_limits<double>::quiet_NaN();

  auto* c_run = app.add_subcommand("run", "execute an experiment config");
  c_run->add_option("--config", config_path, "config file")->required();
  c_run->add_option("--output-dir", output_dir, "override output directory");
  c_run->add_option("--n-iters", iters_override, "override iteration count");
  c_run->add_option("--n-initial-points", points_override, "override initial point count");

  auto* c_verify = app.add_subcommand("verify", "run the property suites");
  c_verify->add_option("--module", module, "geometry|functions|monitors (default: all)");
  c_verify->add_option("--samples", samples, "sample count");
  c_verify->add_option("--seed", seed, "seed");

  auto* c_rate = app.add_subcommand("rate-check", "check corollary bounds on a stored trace");
  c_rate->add_option("--trace", trace_path, "trace csv")->required();
  c_rate->add_option("--which", which, "cor1|cor2|cor3|cor4");
  c_rate->add_option("--out", out_path, "verdict csv path (default: stdout)");
  c_rate->add_option("--f-star", f_star_flag, "reference optimum override");

  auto* c_plot = app.add_subcommand("plot", "emit gnuplot scripts for an experiment dir");
  c_plot->add_option("dir", experiment_dir, "experiment directory")->required();

  auto* c_oracle = app.add_subcommand("oracle", "reference-solve an instance file");
  c_oracle->add_option("--instance", instance_path, "instance json")->required();
  c_oracle->add_option("--long-run-iters", long_run_iters, "long-run fallback iterations");

  try {
    app.parse(argc, argv);
    if (c_run->parsed()) return cmd_run(config_path, output_dir, iters_override, points_override);
    if (c_verify->parsed()) return cmd_verify(module, seed, samples);
    if (c_rate->parsed()) return cmd_rate_check(trace_path, which, out_path, f_star_flag);
    if (c_plot->parsed()) return cmd_plot(experiment_dir);
    if (c_oracle->parsed()) return cmd_oracle(instance_path, long_run_iters);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
