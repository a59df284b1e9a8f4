#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "fixopt/errors.hpp"
#include "fixopt/schedule.hpp"
#include "fixopt/trace.hpp"

namespace fixopt::harness {

enum class ObjectiveFamily { abs_affine, strongly_convex_first };
enum class ObjectiveInterpretation { coordinate, inner_product };

inline const char* to_string(ObjectiveFamily f) {
  return f == ObjectiveFamily::abs_affine ? "abs_affine" : "strongly_convex_first";
}
inline const char* to_string(ObjectiveInterpretation i) {
  return i == ObjectiveInterpretation::coordinate ? "coordinate" : "inner_product";
}

struct ExperimentConfig {
  std::size_t I = 2;
  std::uint64_t seed = 0;
  Method method = Method::parallel;
  StepSchedule schedule = StepSchedule::constant(1e-3);
  std::int64_t n_iters = 1000;
  int n_initial_points = 100;
  ObjectiveFamily objective_family = ObjectiveFamily::abs_affine;
  ObjectiveInterpretation objective_interpretation = ObjectiveInterpretation::coordinate;
  double C = 4.0;
  TieRule tie_rule = TieRule::seeded_uniform;
  bool projected = true;
  std::string output_dir = "out";
  // Extras beyond the core protocol.
  bool wall_clock = false;  // write a non-deterministic wall-time sidecar
  int workers = 1;

  void validate() const {
    if (I < 1 || I > 1024) throw config_error("config: I must be in [1, 1024]");
    if (n_iters < 1) throw config_error("config: n_iters must be >= 1");
    if (n_initial_points < 1) throw config_error("config: n_initial_points must be >= 1");
    if (!(C > 0.0)) throw config_error("config: C must be positive");
    if (workers < 1) throw config_error("config: workers must be >= 1");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"')
                        || (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw config_error("config: key '" + key + "' expects true/false, got '" + v + "'");
}

inline double parse_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (const std::exception&) {
    throw config_error("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

inline std::int64_t parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (const std::exception&) {
    throw config_error("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

}  // namespace detail

// Flat `key = value` tree with dotted keys for the schedule; `#` comments.
// Unknown keys are rejected so that typos cannot silently change a run.
inline ExperimentConfig parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config: line " + std::to_string(lineno) + " is not 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::unquote(detail::trim(line.substr(eq + 1)));
    if (key.empty() || value.empty())
      throw config_error("config: line " + std::to_string(lineno) + " is not 'key = value'");
    if (!kv.emplace(key, value).second)
      throw config_error("config: duplicate key '" + key + "'");
  }

  ExperimentConfig cfg;
  std::string sched_kind = "constant";
  double sched_lambda = 1e-3, sched_c = 1e-3, sched_a = 1.0;
  bool has_kind = false;

  for (const auto& [key, value] : kv) {
    if (key == "I") cfg.I = static_cast<std::size_t>(detail::parse_int(value, key));
    else if (key == "seed")
      cfg.seed = static_cast<std::uint64_t>(detail::parse_int(value, key));
    else if (key == "method") cfg.method = method_from_string(value);
    else if (key == "n_iters") cfg.n_iters = detail::parse_int(value, key);
    else if (key == "n_initial_points")
      cfg.n_initial_points = static_cast<int>(detail::parse_int(value, key));
    else if (key == "objective_family") {
      if (value == "abs_affine") cfg.objective_family = ObjectiveFamily::abs_affine;
      else if (value == "strongly_convex_first")
        cfg.objective_family = ObjectiveFamily::strongly_convex_first;
      else throw config_error("config: unknown objective_family '" + value + "'");
    } else if (key == "objective_interpretation") {
      if (value == "coordinate")
        cfg.objective_interpretation = ObjectiveInterpretation::coordinate;
      else if (value == "inner_product")
        cfg.objective_interpretation = ObjectiveInterpretation::inner_product;
      else throw config_error("config: unknown objective_interpretation '" + value + "'");
    } else if (key == "C") cfg.C = detail::parse_double(value, key);
    else if (key == "tie_rule") {
      if (value == "zero") cfg.tie_rule = TieRule::zero;
      else if (value == "positive") cfg.tie_rule = TieRule::positive;
      else if (value == "seeded_uniform") cfg.tie_rule = TieRule::seeded_uniform;
      else throw config_error("config: unknown tie_rule '" + value + "'");
    } else if (key == "projected") cfg.projected = detail::parse_bool(value, key);
    else if (key == "output_dir") cfg.output_dir = value;
    else if (key == "wall_clock") cfg.wall_clock = detail::parse_bool(value, key);
    else if (key == "workers")
      cfg.workers = static_cast<int>(detail::parse_int(value, key));
    else if (key == "schedule.kind") { sched_kind = value; has_kind = true; }
    else if (key == "schedule.lambda") sched_lambda = detail::parse_double(value, key);
    else if (key == "schedule.c") sched_c = detail::parse_double(value, key);
    else if (key == "schedule.a") sched_a = detail::parse_double(value, key);
    else throw config_error("config: unknown key '" + key + "'");
  }

  if (has_kind && sched_kind != "constant" && sched_kind != "power")
    throw config_error("config: schedule.kind must be constant or power");
  try {
    cfg.schedule = sched_kind == "power" ? StepSchedule::power(sched_c, sched_a)
                                         : StepSchedule::constant(sched_lambda);
  } catch (const invalid_input& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

inline std::string render_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "I = " << cfg.I << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "method = \"" << to_string(cfg.method) << "\"\n";
  if (cfg.schedule.kind() == StepSchedule::Kind::constant) {
    out << "schedule.kind = \"constant\"\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", cfg.schedule.c());
    out << "schedule.lambda = " << buf << "\n";
  } else {
    char buf[64];
    out << "schedule.kind = \"power\"\n";
    std::snprintf(buf, sizeof(buf), "%.17g", cfg.schedule.c());
    out << "schedule.c = " << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.17g", cfg.schedule.exponent());
    out << "schedule.a = " << buf << "\n";
  }
  out << "n_iters = " << cfg.n_iters << "\n";
  out << "n_initial_points = " << cfg.n_initial_points << "\n";
  out << "objective_family = \"" << to_string(cfg.objective_family) << "\"\n";
  out << "objective_interpretation = \"" << to_string(cfg.objective_interpretation) << "\"\n";
  char cbuf[64];
  std::snprintf(cbuf, sizeof(cbuf), "%.17g", cfg.C);
  out << "C = " << cbuf << "\n";
  out << "tie_rule = \"" << to_string(cfg.tie_rule) << "\"\n";
  out << "projected = " << (cfg.projected ? "true" : "false") << "\n";
  // output_dir is location metadata, not part of the experiment identity;
  // omitting it keeps resolved configs byte-identical across output trees.
  out << "wall_clock = " << (cfg.wall_clock ? "true" : "false") << "\n";
  out << "workers = " << cfg.workers << "\n";
  return out.str();
}

}  // namespace fixopt::harness
