#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qgraph/analytic.hpp"
#include "qgraph/config.hpp"
#include "qgraph/csv.hpp"
#include "qgraph/errors.hpp"
#include "qgraph/metric_graph.hpp"
#include "qgraph/spacing.hpp"
#include "qgraph/spectrum.hpp"
#include "qgraph/torus.hpp"

namespace qgraph {

struct CommandOptions {
  std::filesystem::path out_dir = ".";
  std::optional<std::filesystem::path> cache_dir;  // default: out_dir / "cache"
  bool use_cache = true;
  std::vector<std::uint64_t> seed_overrides;
};

struct ResultBundle {
  std::filesystem::path spectrum_csv;
  std::filesystem::path spacing_csv;
  std::vector<std::filesystem::path> distribution_csvs;
  std::filesystem::path summary_path;
  json summary;
};

namespace detail {

inline std::vector<std::uint64_t> effective_seeds(const RunConfig& cfg,
                                                  const CommandOptions& opts) {
  if (!opts.seed_overrides.empty()) return opts.seed_overrides;
  if (!cfg.seeds.empty()) return cfg.seeds;
  return {12345};
}

inline std::filesystem::path cache_directory(const CommandOptions& opts) {
  return opts.cache_dir.value_or(opts.out_dir / "cache");
}

inline std::vector<double> integrable_spectrum(const RunConfig& cfg) {
  const std::vector<double> lengths = cfg.graph_lengths();
  if (cfg.solver.k_min && cfg.solver.k_max) {
    std::vector<double> ks = integrable_levels(lengths, *cfg.solver.k_max).ks();
    std::erase_if(ks, [&](double k) { return k < *cfg.solver.k_min; });
    return ks;
  }
  const std::size_t n = *cfg.solver.levels;
  double total = 0.0;
  for (double l : lengths) total += l;
  const double density = total / std::numbers::pi;
  double k_max = (static_cast<double>(n) + 16.0) / density;
  for (int attempt = 0; attempt < 12; ++attempt) {
    std::vector<double> ks = integrable_levels(lengths, k_max).ks();
    if (ks.size() >= n) {
      ks.resize(n);
      return ks;
    }
    k_max *= 1.25;
  }
  throw MissingLevels("integrable window sizing failed", 0.0, k_max,
                      static_cast<double>(n), 0);
}

inline std::vector<double> compute_spectrum(const RunConfig& cfg) {
  if (!cfg.solver.levels && !(cfg.solver.k_min && cfg.solver.k_max))
    throw ConfigError("solver: a k range or a level count is required for this command");
  const MetricGraph g = cfg.build_graph();
  // Dirichlet decouples every bond, so its spectrum comes straight from the
  // arithmetic-progression generator; root finding is for the coupled case.
  if (cfg.solver.integrable || g.boundary() == Boundary::dirichlet)
    return integrable_spectrum(cfg);
  SolverSettings st;
  st.oversample = cfg.solver.oversample;
  st.refine_rel_tol = cfg.solver.refine_rel_tol;
  if (cfg.solver.levels) return find_first_levels(g, *cfg.solver.levels, st);
  return find_levels(g, *cfg.solver.k_min, *cfg.solver.k_max, st).ks();
}

// Cache layout: <dir>/spectrum_<key>.csv plus a sidecar <...>.fnv holding the
// hash of the CSV bytes. Any mismatch or parse defect falls back to a fresh
// computation that overwrites both files.
inline std::vector<double> cached_spectrum(const RunConfig& cfg, const CommandOptions& opts,
                                           bool* hit = nullptr) {
  if (hit) *hit = false;
  if (!opts.use_cache) return compute_spectrum(cfg);
  const std::filesystem::path dir = cache_directory(opts);
  const std::string key = cfg.spectrum_cache_key();
  const std::filesystem::path csv_path = dir / ("spectrum_" + key + ".csv");
  const std::filesystem::path fnv_path = dir / ("spectrum_" + key + ".fnv");
  std::error_code ec;
  if (std::filesystem::exists(csv_path, ec) && std::filesystem::exists(fnv_path, ec)) {
    const std::string body = read_text_file(csv_path);
    std::string stamp = read_text_file(fnv_path);
    while (!stamp.empty() && (stamp.back() == '\n' || stamp.back() == '\r')) stamp.pop_back();
    if (stamp == hex64(fnv1a64(body))) {
      if (auto ks = parse_spectrum_csv(body)) {
        if (hit) *hit = true;
        return *ks;
      }
    }
  }
  std::vector<double> ks = compute_spectrum(cfg);
  std::filesystem::create_directories(dir);
  const std::string body = spectrum_csv(ks);
  write_text_file(csv_path, body);
  write_text_file(fnv_path, hex64(fnv1a64(body)) + "\n");
  return ks;
}

inline SpacingSeries spacing_series(const RunConfig& cfg, const std::vector<double>& ks) {
  const MetricGraph g = cfg.build_graph();
  return unfold(ks, g.mean_density());
}

// Empirical CDF rows: one row per distinct spacing, y = F(delta).
inline std::vector<std::pair<double, double>> ecdf_rows(std::vector<double> deltas) {
  std::sort(deltas.begin(), deltas.end());
  std::vector<std::pair<double, double>> rows;
  const double n = static_cast<double>(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    const double y = static_cast<double>(i + 1) / n;
    if (!rows.empty() && rows.back().first == deltas[i])
      rows.back().second = y;
    else
      rows.emplace_back(deltas[i], y);
  }
  return rows;
}

inline std::vector<std::pair<double, double>> histogram_rows(const SpacingSeries& s,
                                                             double bin_width) {
  const SpacingDistribution h = histogram(s, bin_width);
  std::vector<std::pair<double, double>> rows;
  double top = 0.0;
  for (double d : s.deltas) top = std::max(top, d);
  const auto bins = static_cast<std::size_t>(std::floor(top / bin_width)) + 1;
  for (std::size_t j = 0; j < bins; ++j) {
    const double center = (static_cast<double>(j) + 0.5) * bin_width;
    rows.emplace_back(center, h.density(center));
  }
  return rows;
}

inline AnalyticSpacing reference_model(const RunConfig& cfg, const std::string& name) {
  if (name == "poisson") return poisson_spacing();
  if (name == "wigner") return wigner_goe_spacing();
  if (name == "figure8") return figure_eight_pdf();
  if (name == "integrable") {
    std::vector<double> lengths =
        (cfg.analytic && !cfg.analytic->lengths.empty()) ? cfg.analytic->lengths
                                                         : cfg.graph_lengths();
    return integrable_pdf(std::move(lengths));
  }
  if (name == "star2") {
    std::vector<double> lengths;
    bool constant_gamma = false;
    if (cfg.analytic && cfg.analytic->lengths.size() >= 2) {
      lengths = cfg.analytic->lengths;
      constant_gamma = cfg.analytic->constant_gamma;
    } else {
      // Derive (l1, l2) from a star whose arms carry exactly two distinct
      // lengths; the duplicated one is l1.
      std::vector<double> ls = cfg.graph_lengths();
      std::sort(ls.begin(), ls.end());
      if (ls.size() == 3 && (ls[0] == ls[1] || ls[1] == ls[2])) {
        const double l1 = ls[1];
        const double l2 = (ls[0] == ls[1]) ? ls[2] : ls[0];
        lengths = {l1, l2};
      } else {
        throw ConfigError(
            "analytic.lengths: star2 needs [l1, l2] (could not derive from the graph)");
      }
    }
    return star2_pdf(lengths[0], lengths[1], constant_gamma);
  }
  throw ConfigError("unknown analytic model '" + name + "'");
}

inline std::vector<std::pair<double, double>> model_rows(
    const AnalyticSpacing& model, const std::function<double(double)>& f, double step,
    std::optional<double> grid_max) {
  const double hi = grid_max.value_or(std::isfinite(model.support) ? model.support : 5.0);
  std::vector<std::pair<double, double>> rows;
  for (std::size_t j = 0;; ++j) {
    const double x = static_cast<double>(j) * step;  // absolute grid
    if (x > hi + 0.5 * step) break;
    rows.emplace_back(x, f(x));
  }
  return rows;
}

inline void write_summary(ResultBundle& bundle, const CommandOptions& opts) {
  bundle.summary_path = opts.out_dir / "summary.json";
  write_text_file(bundle.summary_path, bundle.summary.dump(2) + "\n");
}

}  // namespace detail

// ------------------------------- commands ---------------------------------

inline ResultBundle cmd_spectrum(const RunConfig& cfg, const CommandOptions& opts) {
  std::filesystem::create_directories(opts.out_dir);
  bool cache_hit = false;
  const std::vector<double> ks = detail::cached_spectrum(cfg, opts, &cache_hit);
  const MetricGraph g = cfg.build_graph();

  ResultBundle bundle;
  bundle.spectrum_csv = opts.out_dir / "spectrum.csv";
  write_text_file(bundle.spectrum_csv, spectrum_csv(ks));

  json summary;
  summary["command"] = "spectrum";
  summary["level_count"] = ks.size();
  summary["cache_hit"] = cache_hit;
  if (!ks.empty()) {
    summary["k_first"] = ks.front();
    summary["k_last"] = ks.back();
    const double width = ks.back() - ks.front();
    summary["mean_density_empirical"] =
        width > 0.0 ? static_cast<double>(ks.size() - 1) / width : 0.0;
  }
  summary["mean_density_exact"] = g.mean_density();
  bundle.summary = std::move(summary);
  detail::write_summary(bundle, opts);
  return bundle;
}

inline ResultBundle cmd_spacings(const RunConfig& cfg, const CommandOptions& opts) {
  std::filesystem::create_directories(opts.out_dir);
  bool cache_hit = false;
  const std::vector<double> ks = detail::cached_spectrum(cfg, opts, &cache_hit);
  const SpacingSeries series = detail::spacing_series(cfg, ks);

  ResultBundle bundle;
  bundle.spectrum_csv = opts.out_dir / "spectrum.csv";
  write_text_file(bundle.spectrum_csv, spectrum_csv(ks));
  bundle.spacing_csv = opts.out_dir / "spacings.csv";
  write_text_file(bundle.spacing_csv, spacing_csv(series.deltas));

  const auto cdf_rows = detail::ecdf_rows(series.deltas);
  const std::filesystem::path cdf_path = opts.out_dir / "spacings_cdf.csv";
  write_text_file(cdf_path, distribution_csv(cdf_rows, true));
  bundle.distribution_csvs.push_back(cdf_path);

  const auto hist_rows = detail::histogram_rows(series, cfg.stats.bin_width);
  const std::filesystem::path hist_path = opts.out_dir / "spacings_density.csv";
  write_text_file(hist_path, distribution_csv(hist_rows, false));
  bundle.distribution_csvs.push_back(hist_path);

  const SlopeFit fit = small_slope_fit(series, cfg.stats.fit_quantile);

  json summary;
  summary["command"] = "spacings";
  summary["level_count"] = ks.size();
  summary["spacing_count"] = series.count();
  summary["cache_hit"] = cache_hit;
  summary["mean_spacing"] = series.mean();
  summary["flagged_tiny"] = series.flagged_tiny;
  summary["slope_fit"] = {{"slope", fit.slope},
                          {"stderr", fit.stderr_},
                          {"window", fit.window},
                          {"nonlinear", fit.nonlinear}};
  bundle.summary = std::move(summary);
  detail::write_summary(bundle, opts);
  return bundle;
}

inline ResultBundle cmd_compare(const RunConfig& cfg, const CommandOptions& opts) {
  if (cfg.stats.references.empty())
    throw ConfigError("stats.references: compare needs at least one reference model");
  std::filesystem::create_directories(opts.out_dir);
  bool cache_hit = false;
  const std::vector<double> ks = detail::cached_spectrum(cfg, opts, &cache_hit);
  const SpacingSeries series = detail::spacing_series(cfg, ks);
  const SpacingDistribution empirical = empirical_cdf(series);

  ResultBundle bundle;
  bundle.spectrum_csv = opts.out_dir / "spectrum.csv";
  write_text_file(bundle.spectrum_csv, spectrum_csv(ks));

  json summary;
  summary["command"] = "compare";
  summary["level_count"] = ks.size();
  summary["spacing_count"] = series.count();
  summary["cache_hit"] = cache_hit;
  json ks_obj = json::object();

  for (const std::string& name : cfg.stats.references) {
    const AnalyticSpacing model = detail::reference_model(cfg, name);
    const double distance = ks_distance(empirical, model.distribution());
    ks_obj[name] = distance;

    // Deviation curve: F_empirical - F_model on the absolute grid.
    const auto rows = detail::model_rows(
        model,
        [&](double x) { return empirical.cdf(x) - model.cumulative(x); },
        cfg.analytic ? cfg.analytic->grid_step : 0.01, std::nullopt);
    const std::filesystem::path dev_path = opts.out_dir / ("deviation_" + name + ".csv");
    write_text_file(dev_path, deviation_csv(rows));
    bundle.distribution_csvs.push_back(dev_path);
  }
  summary["ks_distance"] = std::move(ks_obj);
  bundle.summary = std::move(summary);
  detail::write_summary(bundle, opts);
  return bundle;
}

inline ResultBundle cmd_sheets(const RunConfig& cfg, const CommandOptions& opts) {
  std::filesystem::create_directories(opts.out_dir);
  const MetricGraph g = cfg.build_graph();
  const LengthBasis basis = deduce_basis(g, cfg.basis_max_denominator.value_or(50));
  const BasisReport report = validate(g, basis);
  const SumRuleReport rule = verify_sum_rule(g, basis);

  json summary;
  summary["command"] = "sheets";
  summary["torus_dimension"] = report.torus_dimension;
  summary["basis_lengths"] = basis.lengths;
  summary["max_relative_residual"] = report.max_relative_residual;
  summary["basis_ok"] = report.ok;
  json relations = json::array();
  for (const RationalRelation& r : report.relations)
    relations.push_back({{"a", r.index_a}, {"b", r.index_b}, {"p", r.p}, {"q", r.q}});
  summary["rational_relations"] = std::move(relations);
  summary["sheet_counts"] = rule.sheets;
  summary["sum_rule_lhs"] = rule.lhs;
  summary["sum_rule_rhs"] = rule.rhs;
  summary["sum_rule_residual"] = std::abs(rule.lhs - rule.rhs);

  ResultBundle bundle;
  bundle.summary = std::move(summary);
  detail::write_summary(bundle, opts);
  return bundle;
}

inline ResultBundle cmd_analytic(const RunConfig& cfg, const CommandOptions& opts) {
  if (!cfg.analytic) throw ConfigError("analytic: block required for this command");
  std::filesystem::create_directories(opts.out_dir);
  const AnalyticConfig& a = *cfg.analytic;
  const AnalyticSpacing model = detail::reference_model(cfg, a.model);

  ResultBundle bundle;
  const auto density_rows =
      detail::model_rows(model, model.density, a.grid_step, a.grid_max);
  const std::filesystem::path density_path = opts.out_dir / "analytic_density.csv";
  write_text_file(density_path, distribution_csv(density_rows, false, model.peak));
  bundle.distribution_csvs.push_back(density_path);

  const auto cdf_rows = detail::model_rows(model, model.cumulative, a.grid_step, a.grid_max);
  const std::filesystem::path cdf_path = opts.out_dir / "analytic_cdf.csv";
  write_text_file(cdf_path, distribution_csv(cdf_rows, true, model.peak));
  bundle.distribution_csvs.push_back(cdf_path);

  json summary;
  summary["command"] = "analytic";
  summary["model"] = a.model;
  if (!model.lengths.empty()) summary["lengths"] = model.lengths;
  summary["support"] = std::isfinite(model.support) ? json(model.support) : json();
  if (model.peak) {
    summary["peak_position"] = model.peak->first;
    summary["peak_mass"] = model.peak->second;
  }
  summary["normalization"] = model.normalization();
  summary["mean"] = model.mean();
  bundle.summary = std::move(summary);
  detail::write_summary(bundle, opts);
  return bundle;
}

inline ResultBundle cmd_returns(const RunConfig& cfg, const CommandOptions& opts) {
  std::filesystem::create_directories(opts.out_dir);
  const MetricGraph g = cfg.build_graph();
  const LengthBasis basis = deduce_basis(g, cfg.basis_max_denominator.value_or(50));
  auto [flow, surface] = secular_surface(g, basis);
  const std::vector<std::uint64_t> seeds = detail::effective_seeds(cfg, opts);

  const SpacingSeries series = sample_return_spacings(
      flow, surface, cfg.torus.returns, seeds.front(), cfg.torus.per_trajectory);

  ResultBundle bundle;
  bundle.spacing_csv = opts.out_dir / "returns.csv";
  write_text_file(bundle.spacing_csv, spacing_csv(series.deltas));
  const auto cdf_rows = detail::ecdf_rows(series.deltas);
  const std::filesystem::path cdf_path = opts.out_dir / "returns_cdf.csv";
  write_text_file(cdf_path, distribution_csv(cdf_rows, true));
  bundle.distribution_csvs.push_back(cdf_path);

  json summary;
  summary["command"] = "returns";
  summary["torus_dimension"] = flow.dimension();
  summary["return_count"] = series.count();
  summary["mean_spacing"] = series.mean();
  summary["seed"] = seeds.front();

  if (cfg.torus.quadrature && flow.dimension() == 2) {
    QuadratureSettings qs;
    qs.grid_size = cfg.torus.grid_size;
    const QuadratureResult quad = quadrature_spacing_2d(flow, surface, qs);

    std::vector<std::pair<double, double>> quad_cdf;
    for (const auto& [d, w] : quad.atoms) {
      (void)w;
      const double y = quad.distribution.cdf(d);
      if (!quad_cdf.empty() && quad_cdf.back().first == d)
        quad_cdf.back().second = y;
      else
        quad_cdf.emplace_back(d, y);
    }
    const std::filesystem::path quad_path = opts.out_dir / "quadrature_cdf.csv";
    write_text_file(quad_path, distribution_csv(quad_cdf, true));
    bundle.distribution_csvs.push_back(quad_path);

    summary["quadrature"] = {
        {"flux_density", quad.flux_density},
        {"mean_density_exact", g.mean_density()},
        {"min_return_delta", quad.min_return_delta},
        {"segment_count", quad.segment_count},
        {"branch_count", quad.branch_count},
        {"ks_vs_samples", ks_distance(empirical_cdf(series), quad.distribution)}};
  }
  bundle.summary = std::move(summary);
  detail::write_summary(bundle, opts);
  return bundle;
}

inline ResultBundle run_command(const std::string& name, const RunConfig& cfg,
                                const CommandOptions& opts) {
  if (name == "spectrum") return cmd_spectrum(cfg, opts);
  if (name == "spacings") return cmd_spacings(cfg, opts);
  if (name == "compare") return cmd_compare(cfg, opts);
  if (name == "sheets") return cmd_sheets(cfg, opts);
  if (name == "analytic") return cmd_analytic(cfg, opts);
  if (name == "returns") return cmd_returns(cfg, opts);
  throw ConfigError("unknown command '" + name + "'");
}

}  // namespace qgraph
