#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fixopt/solver.hpp"
#include "fixopt/trace.hpp"

namespace fixopt::net {

// User ids are 1-based as seen on the wire; id 0 is the virtual coordinator
// that collects and redistributes the average in the broadcast pattern.
inline constexpr int kCoordinator = 0;
inline constexpr int kAll = -1;

enum class PayloadKind { iterate, average };

inline const char* to_string(PayloadKind k) {
  return k == PayloadKind::iterate ? "iterate" : "average";
}

struct Message {
  std::int64_t n = 0;
  int from = 0;
  int to = 0;  // kAll for broadcasts
  PayloadKind kind = PayloadKind::iterate;
};

struct MessageLog {
  std::vector<Message> entries;

  std::int64_t count(PayloadKind k) const {
    std::int64_t c = 0;
    for (const Message& m : entries)
      if (m.kind == k) ++c;
    return c;
  }
};

struct Topology {
  enum class Kind { broadcast, ring };
  Kind kind = Kind::broadcast;
  std::size_t user_count = 1;

  static Topology broadcast(std::size_t users) {
    if (users < 1) throw invalid_input("topology: needs at least one user");
    return Topology{Kind::broadcast, users};
  }
  static Topology ring(std::size_t users) {
    if (users < 1) throw invalid_input("topology: needs at least one user");
    return Topology{Kind::ring, users};
  }

  // Ring successor of a 1-based user id; user I wraps to user 1.
  std::size_t succ(std::size_t user) const {
    return user == user_count ? 1 : user + 1;
  }
  std::size_t pred(std::size_t user) const {
    return user == 1 ? user_count : user - 1;
  }
};

// Per-round view of the points a user is allowed to read. Reads outside the
// topology edges throw; this is what the wiring tests exercise.
class Mailbox {
 public:
  void grant(int from, const Vec* point) { slots_[from] = point; }

  const Vec& receive(int from) const {
    auto it = slots_.find(from);
    if (it == slots_.end())
      throw topology_violation("read from user " + std::to_string(from)
                               + " is outside the topology");
    return *it->second;
  }

 private:
  std::map<int, const Vec*> slots_;
};

// One lockstep round routed through mailboxes. `update` is called once per
// user (1-based id) and must fetch its input through the mailbox.
template <class UpdateFn>
std::vector<Vec> route_round(const Topology& topo, std::int64_t n, const Vec& shared,
                             UpdateFn&& update, MessageLog& log) {
  std::vector<Vec> outputs;
  outputs.reserve(topo.user_count);
  if (topo.kind == Topology::Kind::broadcast) {
    for (std::size_t u = 1; u <= topo.user_count; ++u) {
      Mailbox box;
      box.grant(kCoordinator, &shared);
      outputs.push_back(update(u, box));
      log.entries.push_back({n, static_cast<int>(u), kAll, PayloadKind::iterate});
    }
    log.entries.push_back({n, kCoordinator, kAll, PayloadKind::average});
  } else {
    const Vec* carry = &shared;
    for (std::size_t u = 1; u <= topo.user_count; ++u) {
      Mailbox box;
      box.grant(static_cast<int>(topo.pred(u)), carry);
      outputs.push_back(update(u, box));
      carry = &outputs.back();
      log.entries.push_back(
          {n, static_cast<int>(u), static_cast<int>(topo.succ(u)), PayloadKind::iterate});
    }
  }
  return outputs;
}

// Runs one iteration of the matching algorithm through the simulator.
// Produces exactly the state the direct step functions produce; the
// simulator adds message accounting, never behavior.
inline IterationState simulate_round(const Topology& topo, const ProblemInstance& inst,
                                     const IterationState& state, const StepSchedule& sched,
                                     const SolveOptions& opts, MessageLog& log) {
  if (topo.user_count != inst.user_count())
    throw invalid_input("simulate_round: topology size does not match instance");
  const double lambda = sched.eval(state.n);
  IterationState next;
  next.n = state.n + 1;
  next.lambda = lambda;

  if (topo.kind == Topology::Kind::broadcast) {
    // The averaging below reduces in user-index order, matching the direct
    // parallel step bit for bit.
    std::vector<detail::UserStepOut> outs(topo.user_count);
    auto update = [&](std::size_t user, const Mailbox& box) -> Vec {
      const Vec& input = box.receive(kCoordinator);
      RngStream rng = detail::tie_stream(opts.seed, user - 1, state.n);
      outs[user - 1] = detail::user_update(inst.users[user - 1], input, lambda,
                                           opts.projected, opts.tie_rule, rng);
      return outs[user - 1].updated;
    };
    std::vector<Vec> points = route_round(topo, state.n, state.x, update, log);
    Vec sum = zeros(state.x.size());
    for (const Vec& p : points)
      for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += p[k];
    next.x = scale(std::move(sum), 1.0 / static_cast<double>(topo.user_count));
    for (std::size_t i = 0; i < points.size(); ++i) {
      next.per_user.push_back(std::move(points[i]));
      next.subgradient_log.push_back(outs[i].grad);
    }
  } else {
    std::vector<detail::UserStepOut> outs(topo.user_count);
    auto update = [&](std::size_t user, const Mailbox& box) -> Vec {
      const Vec& input = box.receive(static_cast<int>(topo.pred(user)));
      next.chain_inputs.push_back(input);
      RngStream rng = detail::tie_stream(opts.seed, user - 1, state.n);
      outs[user - 1] = detail::user_update(inst.users[user - 1], input, lambda,
                                           opts.projected, opts.tie_rule, rng);
      return outs[user - 1].updated;
    };
    std::vector<Vec> points = route_round(topo, state.n, state.x, update, log);
    next.x = points.back();
    for (std::size_t i = 0; i < points.size(); ++i) {
      next.per_user.push_back(std::move(points[i]));
      next.subgradient_log.push_back(outs[i].grad);
    }
  }
  return next;
}

}  // namespace fixopt::net
