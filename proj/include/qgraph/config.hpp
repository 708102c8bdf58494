#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qgraph/csv.hpp"
#include "qgraph/errors.hpp"
#include "qgraph/metric_graph.hpp"
#include "qgraph/spectrum.hpp"
#include "qgraph/torus.hpp"

namespace qgraph {

using nlohmann::json;

struct GraphConfig {
  std::string kind;                // star | complete | figure_eight | lasso | bonds
  std::vector<double> lengths;
  int vertices = 0;                // complete / bonds
  std::vector<Bond> bonds;         // kind == bonds
  Boundary boundary = Boundary::neumann;
};

struct SolverConfig {
  std::optional<double> k_min;
  std::optional<double> k_max;
  std::optional<std::size_t> levels;  // target count, alternative to a range
  int oversample = 8;
  double refine_rel_tol = 1e-12;
  bool integrable = false;  // decoupled-bond spectrum instead of root finding
};

struct StatsConfig {
  double bin_width = 0.05;
  double fit_quantile = 0.10;
  std::vector<std::string> references;  // poisson|wigner|integrable|star2|figure8
};

struct TorusConfig {
  std::size_t returns = 10000;
  std::size_t per_trajectory = 4096;
  std::size_t grid_size = 2048;
  bool quadrature = true;
};

struct AnalyticConfig {
  std::string model;  // poisson|wigner|integrable|star2|figure8
  std::vector<double> lengths;
  bool constant_gamma = false;
  double grid_step = 0.01;
  std::optional<double> grid_max;
};

struct RunConfig {
  int version = 1;
  GraphConfig graph;
  std::optional<long long> basis_max_denominator;
  SolverConfig solver;
  StatsConfig stats;
  TorusConfig torus;
  std::optional<AnalyticConfig> analytic;
  std::string output_directory = ".";
  std::vector<std::uint64_t> seeds;

  MetricGraph build_graph() const {
    const auto& g = graph;
    if (g.kind == "star") return build_star(g.lengths, g.boundary);
    if (g.kind == "complete") return build_complete(g.vertices, g.lengths, g.boundary);
    if (g.kind == "figure_eight") {
      if (g.lengths.size() != 2)
        throw ConfigError("graph.lengths: figure_eight takes exactly two lengths");
      return build_figure_eight(g.lengths[0], g.lengths[1], g.boundary);
    }
    if (g.kind == "lasso") {
      if (g.lengths.size() != 2)
        throw ConfigError("graph.lengths: lasso takes exactly two lengths (bond, loop)");
      return build_lasso(g.lengths[0], g.lengths[1], g.boundary);
    }
    if (g.kind == "bonds") return MetricGraph(g.vertices, g.bonds, g.boundary);
    throw ConfigError("graph.kind: unknown constructor '" + g.kind + "'");
  }

  std::vector<double> graph_lengths() const {
    if (graph.kind == "bonds") {
      std::vector<double> out;
      for (const Bond& b : graph.bonds) out.push_back(b.length);
      return out;
    }
    return graph.lengths;
  }

  // Stable serialization of everything a cached spectrum depends on.
  std::string spectrum_cache_key_material() const {
    std::string s = "v1|";
    s += graph.kind;
    s += graph.boundary == Boundary::dirichlet ? "|dirichlet" : "|neumann";
    s += "|V=" + std::to_string(graph.vertices);
    for (double l : graph.lengths) s += "|" + format_number(l);
    for (const Bond& b : graph.bonds)
      s += "|" + std::to_string(b.u) + "-" + std::to_string(b.v) + ":" +
           format_number(b.length);
    s += solver.integrable ? "|integrable" : "|secular";
    if (solver.levels) s += "|n=" + std::to_string(*solver.levels);
    if (solver.k_min) s += "|a=" + format_number(*solver.k_min);
    if (solver.k_max) s += "|b=" + format_number(*solver.k_max);
    s += "|os=" + std::to_string(solver.oversample);
    s += "|tol=" + format_number(solver.refine_rel_tol);
    return s;
  }

  std::string spectrum_cache_key() const {
    return hex64(fnv1a64(spectrum_cache_key_material()));
  }
};

namespace detail {

// Typed field readers that name the offending field in every diagnostic.

inline const json* find(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  return v.get<double>();
}

inline long long as_integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return v.get<long long>();
}

inline bool as_bool(const json& v, const std::string& where) {
  if (!v.is_boolean()) throw ConfigError(where + ": expected true/false");
  return v.get<bool>();
}

inline std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + ": expected a string");
  return v.get<std::string>();
}

inline std::vector<double> as_number_list(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(as_number(e, where + "[]"));
  return out;
}

inline void reject_unknown(const json& obj, std::initializer_list<const char*> known,
                           const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError(where + ": unknown field '" + it.key() + "'");
  }
}

}  // namespace detail

inline RunConfig parse_config(const json& root) {
  using detail::as_bool;
  using detail::as_integer;
  using detail::as_number;
  using detail::as_number_list;
  using detail::as_string;
  using detail::find;

  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  detail::reject_unknown(
      root, {"version", "graph", "basis", "solver", "stats", "torus", "analytic",
             "output", "seeds"},
      "config");

  RunConfig cfg;
  const json* version = find(root, "version");
  if (!version) throw ConfigError("version: required");
  cfg.version = static_cast<int>(as_integer(*version, "version"));
  if (cfg.version != 1) throw ConfigError("version: unsupported schema version");

  const json* graph = find(root, "graph");
  if (!graph || !graph->is_object()) throw ConfigError("graph: required object");
  detail::reject_unknown(*graph, {"kind", "lengths", "vertices", "bonds", "boundary"},
                         "graph");
  const json* kind = find(*graph, "kind");
  if (!kind) throw ConfigError("graph.kind: required");
  cfg.graph.kind = as_string(*kind, "graph.kind");
  if (const json* lengths = find(*graph, "lengths"))
    cfg.graph.lengths = as_number_list(*lengths, "graph.lengths");
  if (const json* vertices = find(*graph, "vertices"))
    cfg.graph.vertices = static_cast<int>(as_integer(*vertices, "graph.vertices"));
  if (const json* bonds = find(*graph, "bonds")) {
    if (!bonds->is_array()) throw ConfigError("graph.bonds: expected an array");
    for (const auto& row : *bonds) {
      if (!row.is_array() || row.size() != 3)
        throw ConfigError("graph.bonds[]: expected [u, v, length]");
      Bond b;
      b.u = static_cast<int>(as_integer(row[0], "graph.bonds[][0]"));
      b.v = static_cast<int>(as_integer(row[1], "graph.bonds[][1]"));
      b.length = as_number(row[2], "graph.bonds[][2]");
      cfg.graph.bonds.push_back(b);
    }
  }
  if (const json* boundary = find(*graph, "boundary")) {
    const std::string s = as_string(*boundary, "graph.boundary");
    if (s == "neumann")
      cfg.graph.boundary = Boundary::neumann;
    else if (s == "dirichlet")
      cfg.graph.boundary = Boundary::dirichlet;
    else
      throw ConfigError("graph.boundary: expected 'neumann' or 'dirichlet'");
  }

  if (const json* basis = find(root, "basis")) {
    if (!basis->is_object()) throw ConfigError("basis: expected an object");
    detail::reject_unknown(*basis, {"max_denominator"}, "basis");
    if (const json* md = find(*basis, "max_denominator"))
      cfg.basis_max_denominator = as_integer(*md, "basis.max_denominator");
  }

  if (const json* solver = find(root, "solver")) {
    if (!solver->is_object()) throw ConfigError("solver: expected an object");
    detail::reject_unknown(
        *solver, {"k_min", "k_max", "levels", "oversample", "refine_rel_tol", "integrable"},
        "solver");
    if (const json* v = find(*solver, "k_min")) cfg.solver.k_min = as_number(*v, "solver.k_min");
    if (const json* v = find(*solver, "k_max")) cfg.solver.k_max = as_number(*v, "solver.k_max");
    if (const json* v = find(*solver, "levels")) {
      const long long n = as_integer(*v, "solver.levels");
      if (n < 1) throw ConfigError("solver.levels: must be >= 1");
      cfg.solver.levels = static_cast<std::size_t>(n);
    }
    if (const json* v = find(*solver, "oversample"))
      cfg.solver.oversample = static_cast<int>(as_integer(*v, "solver.oversample"));
    if (const json* v = find(*solver, "refine_rel_tol"))
      cfg.solver.refine_rel_tol = as_number(*v, "solver.refine_rel_tol");
    if (const json* v = find(*solver, "integrable"))
      cfg.solver.integrable = as_bool(*v, "solver.integrable");
    const bool has_range = cfg.solver.k_min && cfg.solver.k_max;
    if (cfg.solver.k_min.has_value() != cfg.solver.k_max.has_value())
      throw ConfigError("solver: k_min and k_max must be given together");
    if (has_range && !(*cfg.solver.k_min < *cfg.solver.k_max))
      throw ConfigError("solver: k_min must be below k_max");
    if (has_range && cfg.solver.levels)
      throw ConfigError("solver: give either a k range or a level count, not both");
  }

  if (const json* stats = find(root, "stats")) {
    if (!stats->is_object()) throw ConfigError("stats: expected an object");
    detail::reject_unknown(*stats, {"bin_width", "fit_quantile", "references"}, "stats");
    if (const json* v = find(*stats, "bin_width")) {
      cfg.stats.bin_width = as_number(*v, "stats.bin_width");
      if (!(cfg.stats.bin_width > 0.0)) throw ConfigError("stats.bin_width: must be > 0");
    }
    if (const json* v = find(*stats, "fit_quantile")) {
      cfg.stats.fit_quantile = as_number(*v, "stats.fit_quantile");
      if (!(cfg.stats.fit_quantile > 0.0 && cfg.stats.fit_quantile <= 1.0))
        throw ConfigError("stats.fit_quantile: must be in (0, 1]");
    }
    if (const json* v = find(*stats, "references")) {
      if (!v->is_array()) throw ConfigError("stats.references: expected an array");
      for (const auto& e : *v) {
        const std::string name = as_string(e, "stats.references[]");
        if (name != "poisson" && name != "wigner" && name != "integrable" &&
            name != "star2" && name != "figure8")
          throw ConfigError("stats.references[]: unknown reference '" + name + "'");
        cfg.stats.references.push_back(name);
      }
    }
  }

  if (const json* torus = find(root, "torus")) {
    if (!torus->is_object()) throw ConfigError("torus: expected an object");
    detail::reject_unknown(*torus, {"returns", "per_trajectory", "grid_size", "quadrature"},
                           "torus");
    if (const json* v = find(*torus, "returns")) {
      const long long n = as_integer(*v, "torus.returns");
      if (n < 1) throw ConfigError("torus.returns: must be >= 1");
      cfg.torus.returns = static_cast<std::size_t>(n);
    }
    if (const json* v = find(*torus, "per_trajectory")) {
      const long long n = as_integer(*v, "torus.per_trajectory");
      if (n < 1) throw ConfigError("torus.per_trajectory: must be >= 1");
      cfg.torus.per_trajectory = static_cast<std::size_t>(n);
    }
    if (const json* v = find(*torus, "grid_size")) {
      const long long n = as_integer(*v, "torus.grid_size");
      if (n < 64) throw ConfigError("torus.grid_size: must be >= 64");
      cfg.torus.grid_size = static_cast<std::size_t>(n);
    }
    if (const json* v = find(*torus, "quadrature"))
      cfg.torus.quadrature = as_bool(*v, "torus.quadrature");
  }

  if (const json* analytic = find(root, "analytic")) {
    if (!analytic->is_object()) throw ConfigError("analytic: expected an object");
    detail::reject_unknown(
        *analytic, {"model", "lengths", "constant_gamma", "grid_step", "grid_max"},
        "analytic");
    AnalyticConfig a;
    const json* model = find(*analytic, "model");
    if (!model) throw ConfigError("analytic.model: required");
    a.model = as_string(*model, "analytic.model");
    if (a.model != "poisson" && a.model != "wigner" && a.model != "integrable" &&
        a.model != "star2" && a.model != "figure8")
      throw ConfigError("analytic.model: unknown model '" + a.model + "'");
    if (const json* v = find(*analytic, "lengths"))
      a.lengths = as_number_list(*v, "analytic.lengths");
    if (const json* v = find(*analytic, "constant_gamma"))
      a.constant_gamma = as_bool(*v, "analytic.constant_gamma");
    if (const json* v = find(*analytic, "grid_step")) {
      a.grid_step = as_number(*v, "analytic.grid_step");
      if (!(a.grid_step > 0.0)) throw ConfigError("analytic.grid_step: must be > 0");
    }
    if (const json* v = find(*analytic, "grid_max")) {
      a.grid_max = as_number(*v, "analytic.grid_max");
      if (!(*a.grid_max > 0.0)) throw ConfigError("analytic.grid_max: must be > 0");
    }
    cfg.analytic = std::move(a);
  }

  if (const json* output = find(root, "output")) {
    if (!output->is_object()) throw ConfigError("output: expected an object");
    detail::reject_unknown(*output, {"directory", "formats"}, "output");
    if (const json* v = find(*output, "directory"))
      cfg.output_directory = as_string(*v, "output.directory");
    if (const json* v = find(*output, "formats")) {
      if (!v->is_array()) throw ConfigError("output.formats: expected an array");
      for (const auto& e : *v)
        if (as_string(e, "output.formats[]") != "csv")
          throw ConfigError("output.formats[]: only 'csv' is supported");
    }
  }

  if (const json* seeds = find(root, "seeds")) {
    if (!seeds->is_array()) throw ConfigError("seeds: expected an array of integers");
    for (const auto& e : *seeds) {
      const long long s = as_integer(e, "seeds[]");
      if (s < 0) throw ConfigError("seeds[]: must be non-negative");
      cfg.seeds.push_back(static_cast<std::uint64_t>(s));
    }
  }

  // Validate the graph block eagerly so config errors surface as such.
  try {
    (void)cfg.build_graph();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("graph: ") + e.what());
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::string body;
  try {
    body = read_text_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  json root;
  try {
    root = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  return parse_config(root);
}

}  // namespace qgraph
