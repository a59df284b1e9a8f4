#pragma once

#include <memory>
#include <utility>
#include <variant>
#include <vector>

#include "fixopt/convex_fn.hpp"
#include "fixopt/convex_set.hpp"
#include "fixopt/errors.hpp"
#include "fixopt/vec.hpp"

namespace fixopt {

enum class MappingClass { nonexpansive, quasi_firmly_nonexpansive, quasi_nonexpansive };

// Context for subgradient-projection evaluations: tie rule, RNG stream and an
// optional log of the oracle calls made. Every subgradient projection makes
// exactly one oracle call per evaluation.
struct SubgradientCtx {
  TieRule rule = TieRule::zero;
  RngStream* rng = nullptr;
  std::vector<SubgradientSample>* log = nullptr;
};

// Degenerate-subgradient guard for the division by ||z||^2.
inline constexpr double kSubgradientEps = 1e-14;

// Quasi-nonexpansive mapping algebra: identity, metric projections,
// subgradient projections onto sublevel sets, and the product /
// weighted-average constructors. Immutable after construction; evaluation is
// a pure function of (mapping, point, tie context).
class QneMapping {
 public:
  struct Identity {};
  struct MetricProjection {
    ClosedConvexSet set;
  };
  struct SubgradientProjection {
    ConvexFn g;
  };
  struct Product {
    std::vector<QneMapping> parts;
  };
  struct WeightedTerm;
  struct WeightedAverage {
    std::vector<WeightedTerm> terms;
  };

  static QneMapping identity() {
    return QneMapping(Identity{}, MappingClass::nonexpansive);
  }

  static QneMapping metric_projection(ClosedConvexSet set) {
    return QneMapping(MetricProjection{std::move(set)}, MappingClass::nonexpansive);
  }

  static QneMapping subgradient_projection(ConvexFn g) {
    return QneMapping(SubgradientProjection{std::move(g)},
                      MappingClass::quasi_firmly_nonexpansive);
  }

  // Applies parts in list order, first element first. Products of
  // projections do not commute, so the order is part of the mapping.
  static QneMapping product(std::vector<QneMapping> parts);

  static QneMapping weighted_average(std::vector<std::pair<double, QneMapping>> terms);

  MappingClass claimed_class() const { return class_; }

  Vec evaluate(const Vec& x, SubgradientCtx* ctx = nullptr) const;

  // ||x - Q(x)||
  double fixed_point_residual(const Vec& x, SubgradientCtx* ctx = nullptr) const {
    return dist(x, evaluate(x, ctx));
  }

  template <class T>
  const T* get_if() const {
    return std::get_if<T>(&data_);
  }

 private:
  using Data =
      std::variant<Identity, MetricProjection, SubgradientProjection, Product, WeightedAverage>;

  QneMapping(Data data, MappingClass cls) : data_(std::move(data)), class_(cls) {}

  Data data_;
  MappingClass class_;
};

struct QneMapping::WeightedTerm {
  double weight;
  QneMapping mapping;
};

inline QneMapping QneMapping::product(std::vector<QneMapping> parts) {
  if (parts.empty()) throw invalid_input("product: needs at least one mapping");
  return QneMapping(Product{std::move(parts)}, MappingClass::quasi_nonexpansive);
}

inline QneMapping QneMapping::weighted_average(
    std::vector<std::pair<double, QneMapping>> terms) {
  if (terms.empty()) throw invalid_input("weighted_average: needs at least one term");
  double total = 0.0;
  std::vector<WeightedTerm> out;
  out.reserve(terms.size());
  for (auto& [w, m] : terms) {
    if (w < 0.0) throw invalid_input("weighted_average: negative weight");
    total += w;
    out.push_back(WeightedTerm{w, std::move(m)});
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw invalid_input("weighted_average: weights must sum to 1");
  return QneMapping(WeightedAverage{std::move(out)}, MappingClass::quasi_nonexpansive);
}

inline Vec QneMapping::evaluate(const Vec& x, SubgradientCtx* ctx) const {
  if (std::get_if<Identity>(&data_)) return x;
  if (const MetricProjection* m = std::get_if<MetricProjection>(&data_)) {
    return m->set.project(x);
  }
  if (const SubgradientProjection* m = std::get_if<SubgradientProjection>(&data_)) {
    // One oracle call yields both the value and the subgradient.
    SubgradientSample s =
        m->g.subgradient(x, ctx ? ctx->rule : TieRule::zero, ctx ? ctx->rng : nullptr);
    if (ctx && ctx->log) ctx->log->push_back(s);
    if (s.value <= 0.0) return x;
    const double zn = norm_sq(s.subgradient);
    if (zn <= kSubgradientEps * kSubgradientEps)
      throw degenerate_subgradient("subgradient projection: ||z|| ~ 0 while g(x) > 0");
    return axpy(x, -s.value / zn, s.subgradient);
  }
  if (const Product* m = std::get_if<Product>(&data_)) {
    Vec y = x;
    for (const QneMapping& part : m->parts) y = part.evaluate(y, ctx);
    return y;
  }
  const WeightedAverage& m = std::get<WeightedAverage>(data_);
  Vec y = zeros(x.size());
  for (const WeightedTerm& t : m.terms) {
    const Vec v = t.mapping.evaluate(x, ctx);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += t.weight * v[i];
  }
  return y;
}

// Relaxation Q_a := a*Id + (1-a)*Q. Shares Q's fixed point set, and the
// residuals are proportional: x - Q_a(x) = (1-a)(x - Q(x)).
//
// Two representations are supported. `relax(Q, a)` stores the base mapping Q
// and evaluates the convex combination. `from_relaxed_target(T, a)` stores
// the already-relaxed mapping T = Q_a directly and treats the base as the
// implied Q = (T - a*Id)/(1-a); this is how a projection P_X is installed as
// Q_a with a nontrivial relaxation weight.
class RelaxedMapping {
 public:
  static RelaxedMapping relax(QneMapping base, double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw invalid_input("relax: alpha must be in [0,1)");
    return RelaxedMapping(std::move(base), alpha, Mode::from_base);
  }

  static RelaxedMapping from_relaxed_target(QneMapping target, double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0))
      throw invalid_input("from_relaxed_target: alpha must be in [0,1)");
    return RelaxedMapping(std::move(target), alpha, Mode::from_target);
  }

  double alpha() const { return alpha_; }
  bool stores_target() const { return mode_ == Mode::from_target; }
  const QneMapping& stored() const { return map_; }

  // Q_a(x)
  Vec evaluate(const Vec& x, SubgradientCtx* ctx = nullptr) const {
    Vec mapped = map_.evaluate(x, ctx);
    if (mode_ == Mode::from_target) return mapped;
    if (alpha_ == 0.0) return mapped;
    for (std::size_t i = 0; i < x.size(); ++i)
      mapped[i] = alpha_ * x[i] + (1.0 - alpha_) * mapped[i];
    return mapped;
  }

  // Q(x), the unrelaxed base.
  Vec base_evaluate(const Vec& x, SubgradientCtx* ctx = nullptr) const {
    Vec mapped = map_.evaluate(x, ctx);
    if (mode_ == Mode::from_base) return mapped;
    for (std::size_t i = 0; i < x.size(); ++i)
      mapped[i] = (mapped[i] - alpha_ * x[i]) / (1.0 - alpha_);
    return mapped;
  }

  double fixed_point_residual(const Vec& x, SubgradientCtx* ctx = nullptr) const {
    return dist(x, evaluate(x, ctx));
  }

  // ||x - Q(x)|| derived from the relaxed evaluation via the residual
  // identity, so one mapping evaluation serves both residuals.
  double base_residual_from_relaxed(double relaxed_residual) const {
    return relaxed_residual / (1.0 - alpha_);
  }

 private:
  enum class Mode { from_base, from_target };

  RelaxedMapping(QneMapping map, double alpha, Mode mode)
      : map_(std::move(map)), alpha_(alpha), mode_(mode) {}

  QneMapping map_;
  double alpha_;
  Mode mode_;
};

inline RelaxedMapping relax(QneMapping base, double alpha) {
  return RelaxedMapping::relax(std::move(base), alpha);
}

inline double fixed_point_residual(const QneMapping& m, const Vec& x) {
  return m.fixed_point_residual(x);
}

inline double fixed_point_residual(const RelaxedMapping& m, const Vec& x) {
  return m.fixed_point_residual(x);
}

}  // namespace fixopt
