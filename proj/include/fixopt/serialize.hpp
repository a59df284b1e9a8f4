#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fixopt/problem.hpp"
#include "fixopt/topology.hpp"
#include "fixopt/trace.hpp"

namespace fixopt::io {

using json = nlohmann::json;

// Floats are serialized with 17 significant digits so CSV/JSON round-trips
// reproduce the exact double.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline json to_json(const Vec& v) {
  json a = json::array();
  for (double x : v) a.push_back(x);
  return a;
}

inline Vec vec_from_json(const json& a) {
  Vec v;
  for (const auto& x : a) v.push_back(x.get<double>());
  return v;
}

inline json to_json(const ClosedConvexSet& set) {
  if (const auto* b = set.get_if<ClosedConvexSet::Ball>())
    return {{"kind", "ball"}, {"center", to_json(b->center)}, {"radius", b->radius}};
  if (const auto* h = set.get_if<ClosedConvexSet::Halfspace>())
    return {{"kind", "halfspace"}, {"normal", to_json(h->normal)}, {"offset", h->offset}};
  const auto* b = set.get_if<ClosedConvexSet::Box>();
  return {{"kind", "box"}, {"lower", to_json(b->lower)}, {"upper", to_json(b->upper)}};
}

inline ClosedConvexSet set_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "ball")
    return ClosedConvexSet::ball(vec_from_json(j.at("center")), j.at("radius").get<double>());
  if (kind == "halfspace")
    return ClosedConvexSet::halfspace(vec_from_json(j.at("normal")),
                                      j.at("offset").get<double>());
  if (kind == "box")
    return ClosedConvexSet::box(vec_from_json(j.at("lower")), vec_from_json(j.at("upper")));
  throw invalid_input("instance file: unknown set kind '" + kind + "'");
}

inline json to_json(const ConvexFn& f) {
  if (const auto* a = f.get_if<ConvexFn::AbsAffine>())
    return {{"kind", "abs_affine"}, {"a", a->a}, {"b", a->b}, {"index", a->index}};
  if (const auto* h = f.get_if<ConvexFn::AffineHinge>())
    return {{"kind", "affine_hinge"}, {"c", to_json(h->c)}, {"d", h->d}};
  if (const auto* n = f.get_if<ConvexFn::NormShift>())
    return {{"kind", "norm_shift"}, {"scale", n->scale}, {"offset", n->offset}};
  if (const auto* q = f.get_if<ConvexFn::Quadratic>())
    return {{"kind", "strongly_convex_quadratic"}, {"a", q->a}, {"shift", to_json(q->shift)}};
  const auto* s = f.get_if<ConvexFn::Sum>();
  json parts = json::array();
  for (const ConvexFn& p : s->parts) parts.push_back(to_json(p));
  return {{"kind", "sum"}, {"parts", parts}};
}

inline ConvexFn fn_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "abs_affine")
    return ConvexFn::abs_affine(j.at("a").get<double>(), j.at("b").get<double>(),
                                j.at("index").get<int>());
  if (kind == "affine_hinge")
    return ConvexFn::affine_hinge(vec_from_json(j.at("c")), j.at("d").get<double>());
  if (kind == "norm_shift")
    return ConvexFn::norm_shift(j.at("scale").get<double>(), j.at("offset").get<double>());
  if (kind == "strongly_convex_quadratic")
    return ConvexFn::strongly_convex_quadratic(j.at("a").get<double>(),
                                               vec_from_json(j.at("shift")));
  if (kind == "sum") {
    std::vector<ConvexFn> parts;
    for (const auto& p : j.at("parts")) parts.push_back(fn_from_json(p));
    return ConvexFn::sum(std::move(parts));
  }
  throw invalid_input("instance file: unknown function kind '" + kind + "'");
}

inline json to_json(const QneMapping& m) {
  if (m.get_if<QneMapping::Identity>()) return {{"kind", "identity"}};
  if (const auto* p = m.get_if<QneMapping::MetricProjection>())
    return {{"kind", "metric_projection"}, {"set", to_json(p->set)}};
  if (const auto* s = m.get_if<QneMapping::SubgradientProjection>())
    return {{"kind", "subgradient_projection"}, {"g", to_json(s->g)}};
  if (const auto* p = m.get_if<QneMapping::Product>()) {
    json parts = json::array();
    for (const QneMapping& q : p->parts) parts.push_back(to_json(q));
    return {{"kind", "product"}, {"parts", parts}};
  }
  const auto* w = m.get_if<QneMapping::WeightedAverage>();
  json terms = json::array();
  for (const auto& t : w->terms)
    terms.push_back({{"weight", t.weight}, {"mapping", to_json(t.mapping)}});
  return {{"kind", "weighted_average"}, {"terms", terms}};
}

inline QneMapping qne_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "identity") return QneMapping::identity();
  if (kind == "metric_projection")
    return QneMapping::metric_projection(set_from_json(j.at("set")));
  if (kind == "subgradient_projection")
    return QneMapping::subgradient_projection(fn_from_json(j.at("g")));
  if (kind == "product") {
    std::vector<QneMapping> parts;
    for (const auto& p : j.at("parts")) parts.push_back(qne_from_json(p));
    return QneMapping::product(std::move(parts));
  }
  if (kind == "weighted_average") {
    std::vector<std::pair<double, QneMapping>> terms;
    for (const auto& t : j.at("terms"))
      terms.emplace_back(t.at("weight").get<double>(), qne_from_json(t.at("mapping")));
    return QneMapping::weighted_average(std::move(terms));
  }
  throw invalid_input("instance file: unknown mapping kind '" + kind + "'");
}

inline json to_json(const RelaxedMapping& m) {
  return {{"alpha", m.alpha()},
          {"mode", m.stores_target() ? "target" : "base"},
          {"mapping", to_json(m.stored())}};
}

inline RelaxedMapping relaxed_from_json(const json& j) {
  const double alpha = j.at("alpha").get<double>();
  QneMapping inner = qne_from_json(j.at("mapping"));
  if (j.at("mode").get<std::string>() == "target")
    return RelaxedMapping::from_relaxed_target(std::move(inner), alpha);
  return RelaxedMapping::relax(std::move(inner), alpha);
}

inline json to_json(const ReferenceSolution& ref) {
  json j = {{"f_star", ref.f_star},
            {"method", to_string(ref.method)},
            {"self_consistent", ref.self_consistent}};
  if (ref.x_star) j["x_star"] = to_json(*ref.x_star);
  return j;
}

inline ReferenceSolution reference_from_json(const json& j) {
  ReferenceSolution ref;
  ref.f_star = j.at("f_star").get<double>();
  const std::string m = j.at("method").get<std::string>();
  ref.method = m == "analytic"      ? ReferenceMethod::analytic
               : m == "grid_oracle" ? ReferenceMethod::grid_oracle
                                    : ReferenceMethod::long_run;
  ref.self_consistent = j.value("self_consistent", true);
  if (j.contains("x_star")) ref.x_star = vec_from_json(j.at("x_star"));
  return ref;
}

inline json to_json(const ProblemInstance& inst) {
  json users = json::array();
  for (const UserSpec& u : inst.users) {
    json ju = {{"objective", to_json(u.objective)}, {"mapping", to_json(u.mapping)}};
    if (u.safeguard) ju["safeguard"] = to_json(*u.safeguard);
    users.push_back(ju);
  }
  json j = {{"format", "fixopt-instance-v1"},
            {"dimension", inst.dimension},
            {"seed", inst.seed},
            {"C", inst.c_param},
            {"users", users}};
  if (inst.feasible_point) j["feasible_point"] = to_json(*inst.feasible_point);
  if (inst.reference) j["reference"] = to_json(*inst.reference);
  return j;
}

inline ProblemInstance instance_from_json(const json& j) {
  ProblemInstance inst;
  inst.dimension = j.at("dimension").get<std::size_t>();
  inst.seed = j.value("seed", std::uint64_t{0});
  inst.c_param = j.value("C", 0.0);
  for (const auto& ju : j.at("users")) {
    UserSpec u{fn_from_json(ju.at("objective")), relaxed_from_json(ju.at("mapping")),
               std::nullopt};
    if (ju.contains("safeguard")) u.safeguard = set_from_json(ju.at("safeguard"));
    inst.users.push_back(std::move(u));
  }
  if (j.contains("feasible_point")) inst.feasible_point = vec_from_json(j.at("feasible_point"));
  if (j.contains("reference")) inst.reference = reference_from_json(j.at("reference"));
  inst.validate();
  return inst;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw invalid_input("cannot write '" + path + "'");
  out << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw invalid_input("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_instance(const ProblemInstance& inst, const std::string& path) {
  write_text(path, to_json(inst).dump(2) + "\n");
}

inline ProblemInstance read_instance(const std::string& path) {
  return instance_from_json(json::parse(read_text(path)));
}

// Trace CSV: `# key=value` metadata lines, then a header row and one row per
// iteration. Columns: n, per-user residuals, lambda, D/F contributions,
// inequality slacks, objective value, then oracle / ring extras.
inline std::string render_trace_csv(const RunTrace& t) {
  std::ostringstream out;
  out << "# fixopt-trace v1\n";
  out << "# method=" << to_string(t.method) << "\n";
  out << "# I=" << t.user_count << "\n";
  out << "# N=" << t.dimension << "\n";
  out << "# seed=" << t.seed << "\n";
  out << "# projected=" << (t.projected ? "true" : "false") << "\n";
  out << "# schedule=" << (t.schedule.kind() == StepSchedule::Kind::constant ? "constant"
                                                                             : "power")
      << "\n";
  out << "# schedule_c=" << fmt(t.schedule.c()) << "\n";
  out << "# schedule_a=" << fmt(t.schedule.exponent()) << "\n";
  for (std::size_t i = 0; i < t.alphas.size(); ++i)
    out << "# alpha_" << (i + 1) << "=" << fmt(t.alphas[i]) << "\n";
  if (!std::isnan(t.constants.M1)) out << "# M1=" << fmt(t.constants.M1) << "\n";
  if (!std::isnan(t.constants.M2)) out << "# M2=" << fmt(t.constants.M2) << "\n";
  if (!std::isnan(t.constants.N1)) out << "# N1=" << fmt(t.constants.N1) << "\n";
  if (!std::isnan(t.constants.N2)) out << "# N2=" << fmt(t.constants.N2) << "\n";
  if (!std::isnan(t.constants.M_lambda)) out << "# M_lambda=" << fmt(t.constants.M_lambda) << "\n";
  if (!std::isnan(t.constants.N_lambda)) out << "# N_lambda=" << fmt(t.constants.N_lambda) << "\n";
  if (t.f_star) out << "# f_star=" << fmt(*t.f_star) << "\n";
  if (t.d0) out << "# d0=" << fmt(*t.d0) << "\n";
  out << "# status=" << (t.status == RunStatus::ok ? "ok" : "diverged") << "\n";
  if (t.status != RunStatus::ok) out << "# diverged_at=" << t.diverged_at << "\n";

  const bool ring = t.method == Method::incremental;
  const bool has_dist = !t.rows.empty() && !std::isnan(t.rows.front().dist_X);
  out << "n";
  for (std::size_t i = 1; i <= t.user_count; ++i) out << ",res_" << i;
  out << ",lambda,D_contrib,F_contrib,lemma1_slack,lemma2_slack,monitor_scale,f_xn,elapsed_ns";
  if (has_dist) out << ",dist_X";
  if (ring)
    for (std::size_t i = 1; i <= t.user_count; ++i) out << ",cres_" << i;
  if (ring && has_dist)
    for (std::size_t i = 1; i <= t.user_count; ++i) out << ",cdist_" << i;
  out << "\n";
  for (const MetricRow& r : t.rows) {
    out << r.n;
    for (double v : r.residuals) out << "," << fmt(v);
    out << "," << fmt(r.lambda) << "," << fmt(r.D) << "," << fmt(r.F) << ","
        << fmt(r.lemma1_slack) << "," << fmt(r.lemma2_slack) << "," << fmt(r.monitor_scale)
        << "," << fmt(r.f_xn) << "," << r.elapsed_ns;
    if (has_dist) out << "," << fmt(r.dist_X);
    if (ring)
      for (double v : r.chain_residuals) out << "," << fmt(v);
    if (ring && has_dist)
      for (double v : r.chain_dist_X) out << "," << fmt(v);
    out << "\n";
  }
  return out.str();
}

struct ParsedCsv {
  std::map<std::string, std::string> metadata;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline ParsedCsv parse_csv(const std::string& text) {
  ParsedCsv csv;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      const auto eq = body.find('=');
      if (eq != std::string::npos) {
        auto trim = [](std::string s) {
          const auto a = s.find_first_not_of(' ');
          const auto b = s.find_last_not_of(' ');
          return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        csv.metadata[trim(body.substr(0, eq))] = trim(body.substr(eq + 1));
      }
      continue;
    }
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!have_header) {
      csv.header = cells;
      have_header = true;
      continue;
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const std::string& c : cells) row.push_back(std::strtod(c.c_str(), nullptr));
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

// Rebuilds the trace scalars from a trace CSV so that stored runs can be
// re-checked without rerunning them.
inline RunTrace trace_from_csv(const ParsedCsv& csv) {
  RunTrace t;
  auto meta = [&](const std::string& k) -> std::string {
    auto it = csv.metadata.find(k);
    return it == csv.metadata.end() ? std::string() : it->second;
  };
  if (meta("method").empty()) throw invalid_input("trace csv: missing method metadata");
  t.method = method_from_string(meta("method"));
  t.user_count = static_cast<std::size_t>(std::stoull(meta("I")));
  t.dimension = meta("N").empty() ? 0 : static_cast<std::size_t>(std::stoull(meta("N")));
  t.seed = meta("seed").empty() ? 0 : std::stoull(meta("seed"));
  t.projected = meta("projected") != "false";
  const double sc = meta("schedule_c").empty() ? 1e-3 : std::strtod(meta("schedule_c").c_str(), nullptr);
  const double sa = meta("schedule_a").empty() ? 1.0 : std::strtod(meta("schedule_a").c_str(), nullptr);
  t.schedule = meta("schedule") == "power" ? StepSchedule::power(sc, sa)
                                           : StepSchedule::constant(sc);
  for (std::size_t i = 1; i <= t.user_count; ++i) {
    const std::string a = meta("alpha_" + std::to_string(i));
    t.alphas.push_back(a.empty() ? 0.5 : std::strtod(a.c_str(), nullptr));
  }
  if (!meta("M1").empty()) t.constants.M1 = std::strtod(meta("M1").c_str(), nullptr);
  if (!meta("M2").empty()) t.constants.M2 = std::strtod(meta("M2").c_str(), nullptr);
  if (!meta("N1").empty()) t.constants.N1 = std::strtod(meta("N1").c_str(), nullptr);
  if (!meta("N2").empty()) t.constants.N2 = std::strtod(meta("N2").c_str(), nullptr);
  if (!meta("f_star").empty()) t.f_star = std::strtod(meta("f_star").c_str(), nullptr);
  if (!meta("d0").empty()) t.d0 = std::strtod(meta("d0").c_str(), nullptr);

  const int col_lambda = csv.column("lambda");
  const int col_D = csv.column("D_contrib");
  const int col_F = csv.column("F_contrib");
  const int col_l1 = csv.column("lemma1_slack");
  const int col_l2 = csv.column("lemma2_slack");
  const int col_scale = csv.column("monitor_scale");
  const int col_f = csv.column("f_xn");
  const int col_elapsed = csv.column("elapsed_ns");
  const int col_dist = csv.column("dist_X");
  if (col_lambda < 0 || col_D < 0 || col_F < 0 || col_f < 0)
    throw invalid_input("trace csv: missing required columns");
  for (const auto& row : csv.rows) {
    MetricRow r;
    r.n = static_cast<std::int64_t>(row.at(0));
    for (std::size_t i = 0; i < t.user_count; ++i) r.residuals.push_back(row.at(1 + i));
    r.lambda = row.at(static_cast<std::size_t>(col_lambda));
    r.D = row.at(static_cast<std::size_t>(col_D));
    r.F = row.at(static_cast<std::size_t>(col_F));
    if (col_l1 >= 0) r.lemma1_slack = row.at(static_cast<std::size_t>(col_l1));
    if (col_l2 >= 0) r.lemma2_slack = row.at(static_cast<std::size_t>(col_l2));
    if (col_scale >= 0) r.monitor_scale = row.at(static_cast<std::size_t>(col_scale));
    r.f_xn = row.at(static_cast<std::size_t>(col_f));
    if (col_elapsed >= 0)
      r.elapsed_ns = static_cast<std::int64_t>(row.at(static_cast<std::size_t>(col_elapsed)));
    if (col_dist >= 0) r.dist_X = row.at(static_cast<std::size_t>(col_dist));
    for (std::size_t i = 1; i <= t.user_count; ++i) {
      const int c = csv.column("cres_" + std::to_string(i));
      if (c >= 0) r.chain_residuals.push_back(row.at(static_cast<std::size_t>(c)));
      const int cd = csv.column("cdist_" + std::to_string(i));
      if (cd >= 0) r.chain_dist_X.push_back(row.at(static_cast<std::size_t>(cd)));
    }
    t.rows.push_back(std::move(r));
  }
  t.n_iters = t.rows.empty() ? 0 : t.rows.back().n;
  return t;
}

inline std::string render_message_log_csv(const net::MessageLog& log) {
  std::ostringstream out;
  out << "n,from,to,kind\n";
  for (const net::Message& m : log.entries) {
    out << m.n << "," << m.from << ",";
    if (m.to == net::kAll)
      out << "all";
    else
      out << m.to;
    out << "," << net::to_string(m.kind) << "\n";
  }
  return out.str();
}

}  // namespace fixopt::io
