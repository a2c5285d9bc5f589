#pragma once

// Run configuration (JSON). Every block is optional; missing keys keep their
// defaults. Example:
//
//   {
//     "space": "table1",
//     "design": {"kind": "qmc", "n": 8192, "skip": 1},
//     "surrogate": {"nr": 1, "no": 2, "q": 1.0, "rcond": 1e-10, "var_floor": 1e-10},
//     "paths": {"design": "design.csv", "outputs": "outputs.csv",
//               "model": "model.bin", "report": "report.json"},
//     "grid": {"rows": 100, "cols": 100, "components": ["u", "v"]}
//   }
//
// "space" is either "table1" or a list of {"name", "kind", ...} blocks with
// the fields of the matching distribution (uniform: lo, hi;
// truncated_lognormal: lo, hi and optionally mu_log, sigma_log; scaled_beta:
// shape_a, shape_b, lo, hi).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amrpc/distributions.hpp"
#include "amrpc/errors.hpp"
#include "amrpc/io.hpp"
#include "amrpc/surrogate.hpp"

namespace amrpc {

struct DesignConfig {
  std::string kind = "qmc";  // qmc | mc
  std::size_t n = 8192;
  std::uint64_t skip = 1;
  std::uint64_t seed = 0;
};

struct SurrogateConfig {
  int nr = 1;
  int no = 2;
  double q = 1.0;
  double rcond = 1e-10;
  double var_floor = kDefaultVarFloor;
  std::string quantiles = "empirical";  // empirical | distribution
};

struct PathsConfig {
  std::string design;
  std::string outputs;
  std::string model;
  std::string report;
  std::string reference;
  std::string test_design;
  std::string test_outputs;
  std::string metrics;
  std::string export_dir;
};

struct RunConfig {
  ParameterSpace space = table1_space();
  DesignConfig design;
  SurrogateConfig surrogate;
  PathsConfig paths;
  std::optional<GridGeometry> grid;

  void validate() const {
    if (design.kind != "qmc" && design.kind != "mc") throw ConfigError("design.kind must be 'qmc' or 'mc'");
    if (surrogate.nr < 0) throw ConfigError("surrogate.nr must be >= 0");
    if (surrogate.no < 0) throw ConfigError("surrogate.no must be >= 0");
    if (!(surrogate.q > 0.0 && surrogate.q <= 1.0)) throw ConfigError("surrogate.q must lie in (0, 1]");
    if (!(surrogate.rcond >= 0.0)) throw ConfigError("surrogate.rcond must be >= 0");
    if (!(surrogate.var_floor >= 0.0)) throw ConfigError("surrogate.var_floor must be >= 0");
    if (surrogate.quantiles != "empirical" && surrogate.quantiles != "distribution") {
      throw ConfigError("surrogate.quantiles must be 'empirical' or 'distribution'");
    }
  }
};

namespace detail {

template <class T>
void read_opt(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

inline double need(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw ConfigError(where + ": missing numeric field '" + key + "'");
  }
  return j.at(key).get<double>();
}

}  // namespace detail

inline Parameter parameter_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("space entries must be objects");
  std::string name, kind;
  detail::read_opt(j, "name", name);
  detail::read_opt(j, "kind", kind);
  const std::string where = "parameter '" + name + "'";
  const double lo = detail::need(j, "lo", where);
  const double hi = detail::need(j, "hi", where);
  if (kind == "uniform") return {name, Uniform{lo, hi}};
  if (kind == "truncated_lognormal") {
    if (!(lo > 0.0 && hi > lo)) throw DomainError(where + ": log-normal bounds must satisfy 0 < lo < hi");
    TruncatedLogNormal t = log_centered_lognormal(lo, hi);
    detail::read_opt(j, "mu_log", t.mu_log);
    detail::read_opt(j, "sigma_log", t.sigma_log);
    return {name, t};
  }
  if (kind == "scaled_beta") {
    return {name, ScaledBeta{detail::need(j, "shape_a", where), detail::need(j, "shape_b", where), lo, hi}};
  }
  throw ConfigError(where + ": unknown kind '" + kind + "'");
}

inline Json parameter_json(const Parameter& p) {
  Json j{{"name", p.name}, {"kind", p.distribution.kind()}};
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, TruncatedLogNormal>) {
          j["mu_log"] = d.mu_log;
          j["sigma_log"] = d.sigma_log;
        } else if constexpr (std::is_same_v<T, ScaledBeta>) {
          j["shape_a"] = d.shape_a;
          j["shape_b"] = d.shape_b;
        }
        j["lo"] = d.lo;
        j["hi"] = d.hi;
      },
      p.distribution.law());
  return j;
}

inline ParameterSpace space_from_json(const Json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "table1") return table1_space();
    throw ConfigError("unknown named space '" + j.get<std::string>() + "'");
  }
  if (!j.is_array()) throw ConfigError("space must be \"table1\" or a list of parameters");
  std::vector<Parameter> dims;
  for (const auto& e : j) dims.push_back(parameter_from_json(e));
  return ParameterSpace(std::move(dims));
}

inline Json space_json(const ParameterSpace& space) {
  Json a = Json::array();
  for (const auto& p : space.dims()) a.push_back(parameter_json(p));
  return a;
}

inline RunConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  if (j.contains("space")) c.space = space_from_json(j.at("space"));
  if (j.contains("design")) {
    const auto& d = j.at("design");
    detail::read_opt(d, "kind", c.design.kind);
    detail::read_opt(d, "n", c.design.n);
    detail::read_opt(d, "skip", c.design.skip);
    detail::read_opt(d, "seed", c.design.seed);
  }
  if (j.contains("surrogate")) {
    const auto& s = j.at("surrogate");
    detail::read_opt(s, "nr", c.surrogate.nr);
    detail::read_opt(s, "no", c.surrogate.no);
    detail::read_opt(s, "q", c.surrogate.q);
    detail::read_opt(s, "rcond", c.surrogate.rcond);
    detail::read_opt(s, "var_floor", c.surrogate.var_floor);
    detail::read_opt(s, "quantiles", c.surrogate.quantiles);
  }
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    detail::read_opt(p, "design", c.paths.design);
    detail::read_opt(p, "outputs", c.paths.outputs);
    detail::read_opt(p, "model", c.paths.model);
    detail::read_opt(p, "report", c.paths.report);
    detail::read_opt(p, "reference", c.paths.reference);
    detail::read_opt(p, "test_design", c.paths.test_design);
    detail::read_opt(p, "test_outputs", c.paths.test_outputs);
    detail::read_opt(p, "metrics", c.paths.metrics);
    detail::read_opt(p, "export_dir", c.paths.export_dir);
  }
  if (j.contains("grid") && !j.at("grid").is_null()) {
    const auto& g = j.at("grid");
    GridGeometry grid;
    detail::read_opt(g, "rows", grid.rows);
    detail::read_opt(g, "cols", grid.cols);
    detail::read_opt(g, "components", grid.components);
    c.grid = grid;
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace amrpc
