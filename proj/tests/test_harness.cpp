#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "fixopt/experiment.hpp"
#include "fixopt/instance_gen.hpp"
#include "fixopt/reference.hpp"
#include "fixopt/serialize.hpp"

using namespace fixopt;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("fixopt_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp_tree(const fs::path& root) {
  std::string all;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    all += fs::relative(f, root).string();
    all += '\0';
    all += io::read_text(f.string());
    all += '\0';
  }
  return all;
}

}  // namespace

TEST_CASE("instance generation is deterministic and follows the protocol") {
  harness::ExperimentConfig cfg;
  cfg.I = 4;
  cfg.seed = 7;
  const auto a = harness::generate_instance(cfg);
  const auto b = harness::generate_instance(cfg);
  CHECK(io::to_json(a).dump() == io::to_json(b).dump());

  CHECK(a.dimension == 4);
  REQUIRE(a.users.size() == 4);

  // User 1 carries the norm constraint, the rest unit-norm hinges.
  const auto* sp0 = a.users[0].mapping.stored().get_if<QneMapping::SubgradientProjection>();
  REQUIRE(sp0 != nullptr);
  const auto* ns = sp0->g.get_if<ConvexFn::NormShift>();
  REQUIRE(ns != nullptr);
  CHECK(ns->offset == -2.0 * cfg.C);

  const double root_c = std::pow(cfg.C, 1.0 / 4.0);
  for (std::size_t i = 1; i < 4; ++i) {
    const auto* sp = a.users[i].mapping.stored().get_if<QneMapping::SubgradientProjection>();
    REQUIRE(sp != nullptr);
    const auto* h = sp->g.get_if<ConvexFn::AffineHinge>();
    REQUIRE(h != nullptr);
    CHECK(norm(h->c) == Catch::Approx(1.0).epsilon(1e-12));
    for (double v : h->c) CHECK(v > 0.0);
    CHECK(std::abs(h->d) <= root_c);
  }

  for (const auto& u : a.users) {
    CHECK(u.mapping.alpha() == 0.5);
    REQUIRE(u.safeguard.has_value());
    const auto* ball = u.safeguard->get_if<ClosedConvexSet::Ball>();
    REQUIRE(ball != nullptr);
    CHECK(ball->radius == 2.0 * cfg.C);
    const auto* fa = u.objective.get_if<ConvexFn::AbsAffine>();
    REQUIRE(fa != nullptr);
    CHECK(fa->a > 0.0);
    CHECK(fa->a <= 100.0);
    CHECK(std::abs(fa->b) <= 100.0);
  }
  // coordinate interpretation assigns coordinate i-1 to user i
  CHECK(a.users[2].objective.get_if<ConvexFn::AbsAffine>()->index == 2);

  REQUIRE(a.feasible_point.has_value());
  double worst = -1e300;
  for (const auto& u : a.users) {
    const auto* sp = u.mapping.stored().get_if<QneMapping::SubgradientProjection>();
    worst = std::max(worst, sp->g.value(*a.feasible_point));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("strongly convex and inner-product families") {
  harness::ExperimentConfig cfg;
  cfg.I = 3;
  cfg.seed = 11;
  cfg.objective_family = harness::ObjectiveFamily::strongly_convex_first;
  const auto inst = harness::generate_instance(cfg);
  const auto* q = inst.users[0].objective.get_if<ConvexFn::Quadratic>();
  REQUIRE(q != nullptr);
  CHECK(q->a > 0.0);
  CHECK(q->a <= 100.0);
  CHECK(q->shift.size() == 3);
  CHECK(inst.users[0].objective.convexity().kind == Convexity::strongly_convex);
  CHECK(inst.users[1].objective.get_if<ConvexFn::AbsAffine>() != nullptr);

  harness::ExperimentConfig cfg2;
  cfg2.I = 2;
  cfg2.seed = 13;
  cfg2.objective_interpretation = harness::ObjectiveInterpretation::inner_product;
  const auto inst2 = harness::generate_instance(cfg2);
  RngStream rng(99);
  for (const auto& u : inst2.users) {
    const auto* sum = u.objective.get_if<ConvexFn::Sum>();
    REQUIRE(sum != nullptr);
    REQUIRE(sum->parts.size() == 2);
    const auto* h = sum->parts[0].get_if<ConvexFn::AffineHinge>();
    REQUIRE(h != nullptr);
    for (int k = 0; k < 50; ++k) {
      const Vec x = rng.in_ball(zeros(2), 8.0, 2);
      const double t = dot(h->c, x) + h->d;
      CHECK(u.objective.value(x) == Catch::Approx(std::abs(t)).margin(1e-12));
    }
  }
}

TEST_CASE("grid oracle solves the two-absolute-values-over-a-ball example") {
  ProblemInstance inst;
  inst.dimension = 2;
  const auto ball = ClosedConvexSet::ball({2.0, 0.0}, 1.0);
  const auto guard = ClosedConvexSet::ball(zeros(2), 4.0);
  inst.users.push_back(UserSpec{ConvexFn::abs_affine(1.0, 0.0, 0),
                                relax(QneMapping::metric_projection(ball), 0.5), guard});
  inst.users.push_back(UserSpec{ConvexFn::abs_affine(1.0, 0.0, 1),
                                relax(QneMapping::metric_projection(ball), 0.5), guard});
  const auto ref = harness::reference_solve(inst);
  CHECK(ref.method == ReferenceMethod::grid_oracle);
  CHECK(ref.f_star == Catch::Approx(1.0).margin(2e-3));
  REQUIRE(ref.x_star.has_value());
  CHECK(dist(*ref.x_star, {1.0, 0.0}) <= 2e-3);

  // Reference invariant: the minimizer is feasible and consistent with f*.
  for (const auto& u : inst.users)
    CHECK(u.mapping.base_residual_from_relaxed(u.mapping.fixed_point_residual(*ref.x_star))
          <= 1e-6);
  CHECK(std::abs(inst.objective_total(*ref.x_star) - ref.f_star)
        <= 1e-8 * (1.0 + std::abs(ref.f_star)));
}

TEST_CASE("analytic reference cases") {
  ProblemInstance inst;
  inst.dimension = 2;
  const auto ball = ClosedConvexSet::ball(zeros(2), 3.0);
  inst.users.push_back(UserSpec{ConvexFn::strongly_convex_quadratic(2.0, {1.0, -0.5}),
                                relax(QneMapping::metric_projection(ball), 0.5), std::nullopt});
  const auto ref = harness::reference_solve(inst);
  CHECK(ref.method == ReferenceMethod::analytic);
  CHECK(ref.f_star == 0.0);
  CHECK(dist(*ref.x_star, {-1.0, 0.5}) == 0.0);

  ProblemInstance zero;
  zero.dimension = 2;
  zero.users.push_back(UserSpec{ConvexFn::zero(),
                                relax(QneMapping::metric_projection(ball), 0.5), std::nullopt});
  zero.feasible_point = Vec{0.1, 0.2};
  const auto ref0 = harness::reference_solve(zero);
  CHECK(ref0.method == ReferenceMethod::analytic);
  CHECK(ref0.f_star == 0.0);
}

TEST_CASE("long-run reference labels itself and stays finite") {
  harness::ExperimentConfig cfg;
  cfg.I = 3;
  cfg.seed = 17;
  const auto inst = harness::generate_instance(cfg);
  harness::ReferenceOptions opts;
  opts.long_run_iters = 20000;
  const auto ref = harness::reference_solve(inst, opts);
  CHECK(ref.method == ReferenceMethod::long_run);
  CHECK(std::isfinite(ref.f_star));
}

TEST_CASE("instance serialization round trip") {
  harness::ExperimentConfig cfg;
  cfg.I = 3;
  cfg.seed = 23;
  cfg.objective_family = harness::ObjectiveFamily::strongly_convex_first;
  auto inst = harness::generate_instance(cfg);
  inst.reference = ReferenceSolution{1.25, Vec{0.0, 0.1, 0.2}, ReferenceMethod::grid_oracle, true};
  const auto j = io::to_json(inst);
  const auto back = io::instance_from_json(j);
  CHECK(io::to_json(back).dump() == j.dump());

  // Mapping algebra round trip including products, averages and targets.
  ProblemInstance alg;
  alg.dimension = 2;
  const auto ball = ClosedConvexSet::ball(zeros(2), 1.0);
  const auto half = ClosedConvexSet::halfspace({1.0, 0.0}, -1.0);
  const auto box = ClosedConvexSet::box({-1.0, -1.0}, {1.0, 1.0});
  auto prod = QneMapping::product({QneMapping::metric_projection(ball),
                                   QneMapping::metric_projection(half),
                                   QneMapping::metric_projection(box)});
  auto avg = QneMapping::weighted_average({{0.25, QneMapping::identity()}, {0.75, prod}});
  alg.users.push_back(UserSpec{ConvexFn::sum({ConvexFn::norm_shift(1.0, -2.0)}),
                               RelaxedMapping::relax(avg, 0.25), std::nullopt});
  alg.users.push_back(
      UserSpec{ConvexFn::zero(),
               RelaxedMapping::from_relaxed_target(QneMapping::metric_projection(ball), 0.5),
               box});
  const auto j2 = io::to_json(alg);
  const auto back2 = io::instance_from_json(j2);
  CHECK(io::to_json(back2).dump() == j2.dump());
  RngStream rng(3);
  for (int k = 0; k < 100; ++k) {
    const Vec x = rng.in_ball(zeros(2), 4.0, 2);
    CHECK(alg.users[0].mapping.evaluate(x) == back2.users[0].mapping.evaluate(x));
    CHECK(alg.users[1].mapping.base_evaluate(x) == back2.users[1].mapping.base_evaluate(x));
  }
}

TEST_CASE("trace csv round trip preserves rows and metadata") {
  const auto inst = harness::generate_instance([] {
    harness::ExperimentConfig c;
    c.I = 2;
    c.seed = 31;
    return c;
  }());
  SolveOptions opts;
  opts.seed = 5;
  opts.monitors.feasible_ref = inst.feasible_point;
  const RunTrace t =
      run(inst, Method::incremental, StepSchedule::power(1e-3, 1.0), {1.0, -1.0}, 16, opts);
  const std::string csv = io::render_trace_csv(t);
  const auto parsed = io::parse_csv(csv);
  const RunTrace back = io::trace_from_csv(parsed);
  CHECK(back.method == Method::incremental);
  CHECK(back.user_count == 2);
  CHECK(back.schedule.kind() == StepSchedule::Kind::power);
  REQUIRE(back.rows.size() == t.rows.size());
  for (std::size_t n = 0; n < t.rows.size(); ++n) {
    CHECK(back.rows[n].D == t.rows[n].D);
    CHECK(back.rows[n].F == t.rows[n].F);
    CHECK(back.rows[n].lambda == t.rows[n].lambda);
    CHECK(back.rows[n].residuals == t.rows[n].residuals);
    CHECK(back.rows[n].chain_residuals == t.rows[n].chain_residuals);
    CHECK(back.rows[n].f_xn == t.rows[n].f_xn);
  }
  CHECK(back.constants.N1 == t.constants.N1);
}

TEST_CASE("config parsing is strict") {
  const std::string text =
      "I = 8\n"
      "seed = 42\n"
      "method = \"incremental\"\n"
      "schedule.kind = \"power\"\n"
      "schedule.c = 1e-3\n"
      "schedule.a = 0.1\n"
      "n_iters = 250\n"
      "n_initial_points = 5\n"
      "objective_family = \"abs_affine\"\n"
      "objective_interpretation = \"coordinate\"\n"
      "C = 4\n"
      "tie_rule = \"seeded_uniform\"\n"
      "projected = true\n"
      "output_dir = \"out\"  # comment\n";
  const auto cfg = harness::parse_config_text(text);
  CHECK(cfg.I == 8);
  CHECK(cfg.method == Method::incremental);
  CHECK(cfg.schedule.kind() == StepSchedule::Kind::power);
  CHECK(cfg.schedule.exponent() == 0.1);
  CHECK(cfg.n_iters == 250);

  CHECK_THROWS_AS(harness::parse_config_text("unknown_key = 1\n"), config_error);
  CHECK_THROWS_AS(harness::parse_config_text("I = eight\n"), config_error);
  CHECK_THROWS_AS(harness::parse_config_text("I = 4\nI = 5\n"), config_error);
  CHECK_THROWS_AS(harness::parse_config_text("I = 0\n"), config_error);
  CHECK_THROWS_AS(harness::parse_config_text("schedule.kind = \"power\"\nschedule.a = 2\n"),
                  config_error);

  const auto echo = harness::parse_config_text(harness::render_config(cfg));
  CHECK(harness::render_config(echo) == harness::render_config(cfg));
}

TEST_CASE("experiment runner writes the documented tree deterministically") {
  harness::ExperimentConfig cfg;
  cfg.I = 2;
  cfg.seed = 5;
  cfg.n_iters = 10;
  cfg.n_initial_points = 3;
  const auto dir_a = fresh_dir("exp_a");
  const auto dir_b = fresh_dir("exp_b");

  cfg.output_dir = dir_a.string();
  const auto res_a = harness::run_experiment(cfg);
  cfg.output_dir = dir_b.string();
  const auto res_b = harness::run_experiment(cfg);

  CHECK(res_a.aggregate.size() == 11);
  const std::string agg = io::read_text((dir_a / "aggregate.csv").string());
  CHECK(agg.rfind("n,elapsed_ns_mean,D,F\n", 0) == 0);
  CHECK(res_a.monitors_clean);

  for (const char* f : {"instance.json", "aggregate.csv", "verdicts.csv", "manifest.json",
                        "config_resolved.toml", "plot_D.gp", "plot_F.gp"})
    CHECK(fs::exists(dir_a / f));
  CHECK(fs::exists(dir_a / "traces" / "trace_000.csv"));

  CHECK(slurp_tree(dir_a) == slurp_tree(dir_b));

  // Aggregate consistency: recomputing the means from the stored per-run
  // trace files reproduces the aggregate CSV byte for byte.
  std::vector<RunTrace> reread;
  for (int s = 0; s < 3; ++s) {
    char name[64];
    std::snprintf(name, sizeof(name), "trace_%03d.csv", s);
    reread.push_back(io::trace_from_csv(io::parse_csv(io::read_text((dir_a / "traces" / name).string()))));
  }
  std::vector<harness::AggregateRow> rows;
  for (std::size_t n = 0; n < reread.front().rows.size(); ++n) {
    harness::AggregateRow row;
    row.n = static_cast<std::int64_t>(n);
    double e = 0.0;
    for (const RunTrace& t : reread) e += static_cast<double>(t.rows[n].elapsed_ns);
    row.elapsed_ns_mean = e / 3.0;
    row.D = (reread[0].rows[n].D + reread[1].rows[n].D + reread[2].rows[n].D) / 3.0;
    row.F = (reread[0].rows[n].F + reread[1].rows[n].F + reread[2].rows[n].F) / 3.0;
    rows.push_back(row);
  }
  CHECK(harness::render_aggregate_csv(rows) == agg);

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("experiment runner covers ism too") {
  harness::ExperimentConfig cfg;
  cfg.I = 2;
  cfg.seed = 6;
  cfg.n_iters = 5;
  cfg.n_initial_points = 2;
  cfg.method = Method::ism;
  const auto dir = fresh_dir("exp_ism");
  cfg.output_dir = dir.string();
  const auto res = harness::run_experiment(cfg);
  CHECK(res.aggregate.size() == 6);
  fs::remove_all(dir);
}
