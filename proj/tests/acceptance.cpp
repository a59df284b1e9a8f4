// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion pins its tolerances and fixtures in code.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <vector>

#include "fixopt/experiment.hpp"
#include "fixopt/instance_gen.hpp"
#include "fixopt/metrics.hpp"
#include "fixopt/reference.hpp"
#include "fixopt/serialize.hpp"

using namespace fixopt;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, double seconds, const std::string& detail) {
  std::printf("[%s] criterion %2d (%.1fs): %s\n", pass ? "PASS" : "FAIL", criterion, seconds,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

template <class Fn>
void criterion(int k, double budget_seconds, Fn&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool pass = false;
  try {
    pass = body(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs >= budget_seconds) {
    pass = false;
    detail += " [over budget " + std::to_string(budget_seconds) + "s]";
  }
  report(k, pass, secs, detail);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

harness::ExperimentConfig protocol_config(std::uint64_t seed, Method m, StepSchedule s,
                                          std::int64_t iters, int points,
                                          const std::string& out) {
  harness::ExperimentConfig cfg;
  cfg.I = 64;
  cfg.seed = seed;
  cfg.method = m;
  cfg.schedule = s;
  cfg.n_iters = iters;
  cfg.n_initial_points = points;
  cfg.output_dir = out;
  return cfg;
}

fs::path scratch(const std::string& tag) {
  const fs::path p = fs::path("acceptance_out") / tag;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double aggregate_cv_tail(const std::vector<harness::AggregateRow>& agg, std::size_t from) {
  double mean = 0.0;
  std::size_t cnt = 0;
  for (std::size_t n = from; n < agg.size(); ++n) {
    mean += agg[n].D;
    ++cnt;
  }
  mean /= static_cast<double>(cnt);
  double var = 0.0;
  for (std::size_t n = from; n < agg.size(); ++n) {
    const double d = agg[n].D - mean;
    var += d * d;
  }
  return std::sqrt(var / static_cast<double>(cnt)) / mean;
}

// ---- criterion 1: mapping-class property suite ----------------------------

bool criterion1(std::string& detail) {
  RngStream rng(1001);
  long checks = 0, bad = 0;

  // Family A: subgradient projection of the norm constraint.
  // Family B: subgradient projection of a random hinge.
  // Family C: subgradient projection of hinge + norm sum.
  const ConvexFn g_ball = ConvexFn::norm_shift(1.0, -4.0);
  const Vec c = rng.unit_sphere(3);
  const ConvexFn g_hinge = ConvexFn::affine_hinge(c, 0.3);
  const ConvexFn g_sum = ConvexFn::sum({g_hinge, g_ball});
  const auto half = ClosedConvexSet::halfspace(c, 0.3);
  const auto ball = ClosedConvexSet::ball(zeros(3), 4.0);

  struct Family {
    ConvexFn g;
    std::function<Vec(RngStream&)> sample_fixed;
  };
  std::vector<Family> families;
  families.push_back({g_ball, [&](RngStream& r) { return r.in_ball(zeros(3), 4.0, 3); }});
  families.push_back(
      {g_hinge, [&](RngStream& r) { return half.project(r.in_ball(zeros(3), 9.0, 3)); }});
  families.push_back({g_sum, [&](RngStream& r) {
                        Vec y = r.in_ball(zeros(3), 4.0, 3);
                        for (int k = 0; k < 64; ++k) y = ball.project(half.project(y));
                        return y;
                      }});

  for (const Family& fam : families) {
    const auto q = QneMapping::subgradient_projection(fam.g);
    for (int k = 0; k < 10000; ++k) {
      const Vec x = rng.in_ball(zeros(3), 10.0, 3);
      const Vec y = fam.sample_fixed(rng);
      if (fam.g.value(y) > 0.0) continue;
      const Vec qx = q.evaluate(x);
      ++checks;
      // quasi-firm nonexpansivity
      const double rhs = dist_sq(x, y);
      if (dist_sq(qx, y) + dist_sq(x, qx) > rhs + 1e-9 * (1.0 + rhs)) ++bad;
      // relaxation inequality
      for (double alpha : {0.0, 0.25, 0.5, 0.9}) {
        const auto qa = relax(q, alpha);
        if (dot(sub(x, qa.evaluate(x)), sub(x, y)) < (1.0 - alpha) * dist_sq(x, qx) - 1e-9)
          ++bad;
      }
      // fixed points = sublevel set
      const bool lev = fam.g.value(x) <= 0.0;
      const bool fix = dist(x, qx) <= 1e-12 * (1.0 + norm(x));
      if (lev != fix) ++bad;
    }
  }
  detail = fmt("mapping families: %g checks, %g violations", static_cast<double>(checks),
               static_cast<double>(bad));
  return bad == 0 && checks > 20000;
}

// ---- criterion 2: lemma monitors on generated instances --------------------

bool criterion2(std::string& detail) {
  long rows = 0, bad = 0;
  for (std::size_t I : {2u, 8u}) {
    harness::ExperimentConfig cfg;
    cfg.I = I;
    cfg.seed = 1300 + I;
    const auto inst = harness::generate_instance(cfg);
    for (int s = 0; s < 25; ++s) {
      RngStream x0_rng(derive_seed(derive_seed(cfg.seed, "accept-x0"), s));
      const Vec x0 = x0_rng.in_ball(zeros(I), 2.0 * cfg.C, I);
      for (Method m : {Method::parallel, Method::incremental}) {
        SolveOptions opts;
        opts.seed = derive_seed(derive_seed(cfg.seed, "accept-run"), s);
        opts.monitors.feasible_ref = inst.feasible_point;
        opts.retain_states_cap = 0;
        const RunTrace t = run(inst, m, StepSchedule::constant(1e-3), x0, 500, opts);
        for (std::size_t n = 0; n + 1 < t.rows.size(); ++n) {
          ++rows;
          if (!metrics::slack_ok(t.rows[n].lemma1_slack, t.rows[n].monitor_scale - 1.0)) ++bad;
          if (!metrics::slack_ok(t.rows[n].lemma2_slack, t.rows[n].monitor_scale - 1.0)) ++bad;
        }
      }
    }
  }
  detail = fmt("lemma slacks on %g iterations, %g below tolerance", static_cast<double>(rows),
               static_cast<double>(bad));
  return bad == 0 && rows == 2 * 25 * 2 * 500;
}

// ---- criterion 3: constant-step behavior ----------------------------------

bool criterion3(std::string& detail) {
  const auto dir = scratch("c3");
  auto cfg5 = protocol_config(25, Method::parallel, StepSchedule::constant(1e-5), 1000, 20,
                              (dir / "lam5").string());
  const auto r5 = harness::run_experiment(cfg5);
  auto cfg3 = protocol_config(25, Method::parallel, StepSchedule::constant(1e-3), 1000, 20,
                              (dir / "lam3").string());
  const auto r3 = harness::run_experiment(cfg3);
  const double d5 = r5.aggregate.back().D;
  const double d3 = r3.aggregate.back().D;
  detail = fmt("D_1000(1e-5)=%.3e vs D_1000(1e-3)=%.3e, band limit 1e-4", d5, d3);
  return d5 < d3 && d5 <= 1e-4;
}

// ---- criterion 4: diminishing-step convergence to the reference ------------

bool criterion4(std::string& detail) {
  harness::ExperimentConfig cfg;
  cfg.I = 2;
  cfg.seed = 1;
  cfg.objective_family = harness::ObjectiveFamily::strongly_convex_first;
  const auto inst = harness::generate_instance(cfg);
  const auto ref = harness::reference_solve(inst);
  if (!ref.x_star) {
    detail = "no reference minimizer";
    return false;
  }
  RngStream x0_rng(derive_seed(derive_seed(cfg.seed, "x0"), 0));
  const Vec x0 = x0_rng.in_ball(zeros(2), 2.0 * cfg.C, 2);
  double worst = 0.0;
  for (Method m : {Method::parallel, Method::incremental}) {
    SolveOptions opts;
    opts.seed = derive_seed(derive_seed(cfg.seed, "run"), 0);
    const RunTrace t = run(inst, m, StepSchedule::power(1e-3, 1.0), x0, 10000, opts);
    if (t.status != RunStatus::ok) {
      detail = "run diverged";
      return false;
    }
    worst = std::max(worst, dist(t.states.back().x, *ref.x_star));
  }
  detail = fmt("max final ||x_n - x*|| = %.3e (limit 1e-2)", worst);
  return worst <= 1e-2;
}

// ---- criterion 5: cor1 rate bound on an identity-mapping instance ----------

bool criterion5(std::string& detail) {
  ProblemInstance inst;
  inst.dimension = 2;
  inst.users.push_back(UserSpec{ConvexFn::abs_affine(2.0, 1.0, 0),
                                relax(QneMapping::identity(), 0.5), std::nullopt});
  inst.users.push_back(UserSpec{ConvexFn::abs_affine(0.5, -1.0, 1),
                                relax(QneMapping::identity(), 0.5), std::nullopt});
  const auto ref = harness::reference_solve(inst);
  SolveOptions opts;
  opts.projected = false;
  opts.seed = 1005;
  const std::int64_t iters = 400;
  const Vec x0{-0.5 + 2e-3, 2.0 - 1e-3};
  const RunTrace t = run(inst, Method::parallel, StepSchedule::power(1e-3, 1.0), x0, iters, opts);
  const auto res = metrics::check_rate_bounds(t, t.constants, ref, metrics::RateWhich::cor1);
  long late_fail = 0;
  for (const auto& row : res.rows)
    if (row.n >= res.first_satisfied && row.verdict != metrics::Verdict::pass) ++late_fail;
  detail = fmt("first-satisfied index %g of %g iterations, late failures %g",
               static_cast<double>(res.first_satisfied), static_cast<double>(iters),
               static_cast<double>(late_fail));
  return res.first_satisfied >= 0 && res.first_satisfied < iters / 2 && late_fail == 0;
}

// ---- criterion 6: cor2/cor4 on the projection-target construction ----------

bool criterion6(std::string& detail) {
  ProblemInstance inst;
  inst.dimension = 2;
  const auto X = ClosedConvexSet::ball({0.25, -0.1}, 1.0);
  inst.users.push_back(UserSpec{
      ConvexFn::abs_affine(1.5, -6.0, 0),
      RelaxedMapping::from_relaxed_target(QneMapping::metric_projection(X), 0.5), std::nullopt});
  inst.users.push_back(UserSpec{
      ConvexFn::abs_affine(1.0, 3.0, 1),
      RelaxedMapping::from_relaxed_target(QneMapping::metric_projection(X), 0.5), std::nullopt});
  const double nv = std::sqrt(1.5 * 1.5 + 1.0);
  const Vec x0{0.25 + 1.5 * 1.5 / nv, -0.1 - 1.5 / nv};  // d(x0, X) = 0.5
  const auto ref = harness::reference_solve(inst);

  SolveOptions opts;
  opts.projected = false;
  opts.seed = 1006;
  opts.dist_oracle = DistanceOracle{X};
  opts.retain_states_cap = 0;

  long fails = 0, unmet = 0, total = 0;
  for (Method m : {Method::parallel, Method::incremental}) {
    const RunTrace t = run(inst, m, StepSchedule::power(1e-3, 1.0), x0, 2000, opts);
    const auto which =
        m == Method::parallel ? metrics::RateWhich::cor2 : metrics::RateWhich::cor4;
    const auto res = metrics::check_rate_bounds(t, t.constants, ref, which);
    for (const auto& row : res.rows) {
      ++total;
      if (row.verdict == metrics::Verdict::fail) ++fails;
      if (row.verdict == metrics::Verdict::precondition_unmet
          || row.verdict == metrics::Verdict::unsupported)
        ++unmet;
    }
  }
  const double unmet_frac = static_cast<double>(unmet) / static_cast<double>(total);
  detail = fmt("verdicts: %g checked, %g failed, %.4f precondition-unmet",
               static_cast<double>(total), static_cast<double>(fails), unmet_frac);
  return fails == 0 && unmet_frac <= 0.10;
}

// ---- criterion 7: ism endpoint parity -------------------------------------

bool criterion7(std::string& detail) {
  const auto dir = scratch("c7");
  auto cfg_inc = protocol_config(1, Method::incremental, StepSchedule::constant(1e-3), 1000, 20,
                                 (dir / "inc").string());
  const auto ri = harness::run_experiment(cfg_inc);
  auto cfg_ism = protocol_config(1, Method::ism, StepSchedule::constant(1e-3), 1000, 20,
                                 (dir / "ism").string());
  const auto rm = harness::run_experiment(cfg_ism);
  const double fi = ri.aggregate.back().F;
  const double fm = rm.aggregate.back().F;
  const double rel = std::abs(fm - fi) / std::abs(fi);
  detail = fmt("F_1000: ism=%.4e vs incremental=%.4e, rel diff %.4f (limit 0.05)", fm, fi, rel);
  return rel <= 0.05;
}

// ---- criterion 8: stability contrast --------------------------------------

bool criterion8(std::string& detail) {
  const auto dir = scratch("c8");
  auto cfg_p = protocol_config(3, Method::parallel, StepSchedule::power(1e-3, 0.01), 1000, 20,
                               (dir / "par").string());
  const auto rp = harness::run_experiment(cfg_p);
  auto cfg_i = protocol_config(3, Method::incremental, StepSchedule::power(1e-3, 0.01), 1000,
                               20, (dir / "inc").string());
  const auto ri = harness::run_experiment(cfg_i);
  const double cv_par = aggregate_cv_tail(rp.aggregate, 500);
  const double cv_inc = aggregate_cv_tail(ri.aggregate, 500);
  detail = fmt("cv(D_n, n in [500,1000]): broadcast %.4f vs ring %.4f", cv_par, cv_inc);
  return cv_par < cv_inc;
}

// ---- criterion 9: determinism of the experiment tree ----------------------

std::string tree_digest(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) {
    all += fs::relative(f, root).string();
    all += '\0';
    all += io::read_text(f.string());
    all += '\0';
  }
  return all;
}

bool criterion9(std::string& detail) {
  harness::ExperimentConfig cfg;
  cfg.I = 2;
  cfg.seed = 5;
  cfg.method = Method::incremental;
  cfg.schedule = StepSchedule::power(1e-3, 0.1);
  cfg.n_iters = 50;
  cfg.n_initial_points = 5;
  const auto dir_a = scratch("c9_a");
  const auto dir_b = scratch("c9_b");
  cfg.output_dir = dir_a.string();
  harness::run_experiment(cfg);
  cfg.output_dir = dir_b.string();
  harness::run_experiment(cfg);
  const std::string a = tree_digest(dir_a);
  const std::string b = tree_digest(dir_b);
  detail = fmt("output trees: %g bytes each, identical=%g", static_cast<double>(a.size()),
               static_cast<double>(a == b));
  return !a.empty() && a == b;
}

// ---- criterion 10: monitor sensitivity ------------------------------------

bool criterion10(std::string& detail) {
  harness::ExperimentConfig cfg;
  cfg.I = 2;
  cfg.seed = 3;
  const auto inst = harness::generate_instance(cfg);
  SolveOptions opts;
  opts.seed = 1010;
  opts.monitors.feasible_ref = inst.feasible_point;
  RunTrace t = run(inst, Method::parallel, StepSchedule::constant(1e-3), {5.0, 1.0}, 50, opts);

  t.states[25].x[0] += 1.0;
  int flipped = 0;
  for (std::size_t n : {24u, 25u}) {
    const auto pair = metrics::check_lemma_parallel(inst, t.states[n], t.states[n + 1],
                                                    t.constants, *inst.feasible_point);
    if (!metrics::slack_ok(pair.lemma_i, pair.scale - 1.0)) ++flipped;
    if (!metrics::slack_ok(pair.lemma_ii, pair.scale - 1.0)) ++flipped;
  }
  detail = fmt("corrupted iterate flipped %g monitor verdicts", static_cast<double>(flipped));
  return flipped >= 1;
}

}  // namespace

int main(int argc, char** argv) {
  int only = -1;
  if (argc > 1) only = std::atoi(argv[1]);
  fs::create_directories("acceptance_out");

  struct Entry {
    int k;
    double budget;
    std::function<bool(std::string&)> body;
  };
  const std::vector<Entry> entries = {
      {1, 10.0, criterion1},  {2, 30.0, criterion2},  {3, 180.0, criterion3},
      {4, 60.0, criterion4},  {5, 30.0, criterion5},  {6, 60.0, criterion6},
      {7, 180.0, criterion7}, {8, 180.0, criterion8}, {9, 60.0, criterion9},
      {10, 5.0, criterion10},
  };
  for (const Entry& e : entries) {
    if (only > 0 && e.k != only) continue;
    criterion(e.k, e.budget, e.body);
  }
  if (g_failures == 0)
    std::printf("acceptance: all criteria passed\n");
  else
    std::printf("acceptance: %d criteria FAILED\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
