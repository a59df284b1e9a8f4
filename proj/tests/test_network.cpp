#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "fixopt/instance_gen.hpp"
#include "fixopt/serialize.hpp"
#include "fixopt/topology.hpp"

using namespace fixopt;

namespace {

bool bitwise_equal(const Vec& a, const Vec& b) {
  return a.size() == b.size()
         && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("ring wiring") {
  const auto topo = net::Topology::ring(3);
  CHECK(topo.succ(1) == 2);
  CHECK(topo.succ(2) == 3);
  CHECK(topo.succ(3) == 1);
  CHECK(topo.pred(1) == 3);

  const auto loop = net::Topology::ring(1);
  CHECK(loop.succ(1) == 1);
  CHECK(loop.pred(1) == 1);
}

TEST_CASE("message counts per round") {
  harness::ExperimentConfig cfg;
  cfg.I = 3;
  cfg.seed = 5;
  const auto inst = harness::generate_instance(cfg);
  SolveOptions opts;
  opts.seed = 1;
  const auto sched = StepSchedule::constant(1e-3);

  IterationState state;
  state.n = 0;
  state.x = zeros(3);

  net::MessageLog blog;
  net::simulate_round(net::Topology::broadcast(3), inst, state, sched, opts, blog);
  CHECK(blog.entries.size() == 4);  // 3 iterate sends + 1 average distribution
  CHECK(blog.count(net::PayloadKind::iterate) == 3);
  CHECK(blog.count(net::PayloadKind::average) == 1);

  net::MessageLog rlog;
  net::simulate_round(net::Topology::ring(3), inst, state, sched, opts, rlog);
  REQUIRE(rlog.entries.size() == 3);
  CHECK(rlog.entries[0].from == 1);
  CHECK(rlog.entries[0].to == 2);
  CHECK(rlog.entries[1].from == 2);
  CHECK(rlog.entries[1].to == 3);
  CHECK(rlog.entries[2].from == 3);
  CHECK(rlog.entries[2].to == 1);
}

TEST_CASE("degenerate single-user ring logs the self loop") {
  harness::ExperimentConfig cfg;
  cfg.I = 1;
  cfg.seed = 2;
  const auto inst = harness::generate_instance(cfg);
  SolveOptions opts;
  IterationState state;
  state.n = 0;
  state.x = zeros(1);
  net::MessageLog log;
  net::simulate_round(net::Topology::ring(1), inst, state, StepSchedule::constant(1e-3), opts,
                      log);
  REQUIRE(log.entries.size() == 1);
  CHECK(log.entries[0].from == 1);
  CHECK(log.entries[0].to == 1);
}

TEST_CASE("simulator reproduces the direct solver traces bitwise") {
  harness::ExperimentConfig cfg;
  cfg.I = 4;
  cfg.seed = 17;
  const auto inst = harness::generate_instance(cfg);
  const auto sched = StepSchedule::power(1e-3, 0.5);
  SolveOptions opts;
  opts.seed = 42;

  for (Method method : {Method::parallel, Method::incremental}) {
    const RunTrace direct = run(inst, method, sched, zeros(4), 24, opts);
    const auto topo =
        method == Method::parallel ? net::Topology::broadcast(4) : net::Topology::ring(4);
    net::MessageLog log;
    IterationState state;
    state.n = 0;
    state.x = zeros(4);
    for (std::int64_t n = 0; n < 24; ++n) {
      IterationState next = net::simulate_round(topo, inst, state, sched, opts, log);
      CHECK(bitwise_equal(next.x, direct.states[static_cast<std::size_t>(n) + 1].x));
      for (std::size_t i = 0; i < 4; ++i)
        CHECK(bitwise_equal(next.per_user[i],
                            direct.states[static_cast<std::size_t>(n)].per_user[i]));
      state = std::move(next);
    }
    const std::int64_t expect_per_round = method == Method::parallel ? 5 : 4;
    CHECK(static_cast<std::int64_t>(log.entries.size()) == 24 * expect_per_round);
  }
}

TEST_CASE("reads outside the topology edges throw") {
  const auto topo = net::Topology::ring(3);
  net::MessageLog log;
  const Vec shared = zeros(2);
  auto nosy = [&](std::size_t user, const net::Mailbox& box) -> Vec {
    if (user == 2) return box.receive(3);  // user 2 may only read user 1
    return box.receive(static_cast<int>(topo.pred(user)));
  };
  CHECK_THROWS_AS(net::route_round(topo, 0, shared, nosy, log), topology_violation);

  net::MessageLog blog;
  auto nosy_broadcast = [&](std::size_t, const net::Mailbox& box) -> Vec {
    return box.receive(2);  // only the coordinator slot is granted
  };
  CHECK_THROWS_AS(
      net::route_round(net::Topology::broadcast(3), 0, shared, nosy_broadcast, blog),
      topology_violation);
}

TEST_CASE("message log serializes to csv") {
  net::MessageLog log;
  log.entries.push_back({0, 1, net::kAll, net::PayloadKind::iterate});
  log.entries.push_back({0, net::kCoordinator, net::kAll, net::PayloadKind::average});
  log.entries.push_back({1, 2, 3, net::PayloadKind::iterate});
  const std::string csv = io::render_message_log_csv(log);
  CHECK(csv == "n,from,to,kind\n0,1,all,iterate\n0,0,all,average\n1,2,3,iterate\n");
}
