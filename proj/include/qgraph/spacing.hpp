#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "qgraph/errors.hpp"
#include "qgraph/metric_graph.hpp"
#include "qgraph/spectrum.hpp"

namespace qgraph {

// Threshold below which a spacing is treated as a numerical degeneracy:
// kept in the series, counted, excluded from slope-fit windows.
inline constexpr double kTinySpacing = 1e-9;

// Unfolded nearest-neighbor spacings (mean spacing scaled to 1).
struct SpacingSeries {
  std::vector<double> deltas;
  double k_lo = 0.0;
  double k_hi = 0.0;
  std::size_t flagged_tiny = 0;  // entries below kTinySpacing

  std::size_t count() const { return deltas.size(); }

  double mean() const {
    if (deltas.empty()) return 0.0;
    double acc = 0.0;
    for (double d : deltas) acc += d;
    return acc / static_cast<double>(deltas.size());
  }
};

// Delta_n = density * (k_{n+1} - k_n). Ties are allowed (exact degeneracies
// from the decoupled-bond generator); decreasing input is rejected.
inline SpacingSeries unfold(const std::vector<double>& ks, double mean_density) {
  if (ks.size() < 2) throw InsufficientData("unfold requires at least two levels");
  if (!(mean_density > 0.0)) throw InvalidInput("unfold requires a positive mean density");
  SpacingSeries out;
  out.k_lo = ks.front();
  out.k_hi = ks.back();
  out.deltas.reserve(ks.size() - 1);
  for (std::size_t i = 0; i + 1 < ks.size(); ++i) {
    if (ks[i + 1] < ks[i]) throw InvalidInput("unfold requires nondecreasing levels");
    const double d = mean_density * (ks[i + 1] - ks[i]);
    if (d < kTinySpacing) ++out.flagged_tiny;
    out.deltas.push_back(d);
  }
  return out;
}

inline SpacingSeries unfold(const SpectrumSample& s, const MetricGraph& g) {
  return unfold(s.ks(), g.mean_density());
}

inline SpacingSeries unfold(const SpectrumSample& s, double mean_density) {
  return unfold(s.ks(), mean_density);
}

// One spacing distribution, empirical or analytic: a right-continuous
// cumulative F with its left limit, an optional density evaluator, an
// optional delta component, and the abscissas where sup-distances between
// distributions can be attained.
struct SpacingDistribution {
  std::function<double(double)> cdf;
  std::function<double(double)> cdf_left;
  std::function<double(double)> density;  // may be empty
  std::vector<double> probes;
  std::optional<std::pair<double, double>> peak;  // (position, mass)
  double support_hint = 0.0;
};

// Exact empirical CDF: piecewise constant with a 1/N jump at every sample.
inline SpacingDistribution empirical_cdf(std::vector<double> deltas) {
  if (deltas.empty()) throw InsufficientData("empirical_cdf requires samples");
  std::sort(deltas.begin(), deltas.end());
  auto data = std::make_shared<const std::vector<double>>(std::move(deltas));
  const double n = static_cast<double>(data->size());
  SpacingDistribution out;
  out.cdf = [data, n](double x) {
    return static_cast<double>(std::upper_bound(data->begin(), data->end(), x) -
                               data->begin()) / n;
  };
  out.cdf_left = [data, n](double x) {
    return static_cast<double>(std::lower_bound(data->begin(), data->end(), x) -
                               data->begin()) / n;
  };
  out.probes.assign(data->begin(), data->end());
  out.probes.erase(std::unique(out.probes.begin(), out.probes.end()), out.probes.end());
  out.support_hint = data->back();
  return out;
}

inline SpacingDistribution empirical_cdf(const SpacingSeries& s) {
  return empirical_cdf(s.deltas);
}

// Density histogram: bins [j*w, (j+1)*w), densities counts/(N*w), so the
// total integral is exactly 1. Cumulative form is piecewise linear. Used
// for plotting and the small-bin density estimate; quantitative
// comparisons go through empirical_cdf instead.
inline SpacingDistribution histogram(const SpacingSeries& s, double bin_width) {
  if (!(bin_width > 0.0)) throw InvalidInput("histogram requires a positive bin width");
  if (s.deltas.empty()) throw InsufficientData("histogram requires samples");
  const double top = *std::max_element(s.deltas.begin(), s.deltas.end());
  const auto bins = static_cast<std::size_t>(std::floor(top / bin_width)) + 1;
  auto counts = std::make_shared<std::vector<double>>(bins, 0.0);
  for (double d : s.deltas) {
    auto j = static_cast<std::size_t>(d / bin_width);
    if (j >= bins) j = bins - 1;
    (*counts)[j] += 1.0;
  }
  const double n = static_cast<double>(s.deltas.size());
  auto cumulative = std::make_shared<std::vector<double>>(bins + 1, 0.0);
  for (std::size_t j = 0; j < bins; ++j)
    (*cumulative)[j + 1] = (*cumulative)[j] + (*counts)[j] / n;

  SpacingDistribution out;
  const double w = bin_width;
  out.density = [counts, n, w, bins](double x) {
    if (x < 0.0) return 0.0;
    const auto j = static_cast<std::size_t>(x / w);
    if (j >= bins) return 0.0;
    return (*counts)[j] / (n * w);
  };
  out.cdf = [cumulative, w, bins](double x) {
    if (x <= 0.0) return 0.0;
    if (x >= static_cast<double>(bins) * w) return 1.0;
    const double u = x / w;
    const auto j = static_cast<std::size_t>(u);
    const double frac = u - static_cast<double>(j);
    return (*cumulative)[j] + frac * ((*cumulative)[j + 1] - (*cumulative)[j]);
  };
  out.cdf_left = out.cdf;  // continuous
  out.probes.reserve(bins + 1);
  for (std::size_t j = 0; j <= bins; ++j)
    out.probes.push_back(static_cast<double>(j) * w);
  out.support_hint = static_cast<double>(bins) * w;
  return out;
}

struct SlopeFit {
  double slope = 0.0;        // fitted coefficient of F(delta) ~ slope * delta^2
  double stderr_ = 0.0;
  bool nonlinear = false;    // lower-half slope exceeds upper-half by > 1.5x
  std::size_t window = 0;    // samples used
};

namespace detail {

inline double origin_slope(const std::vector<double>& x, const std::vector<double>& y,
                           std::size_t lo, std::size_t hi) {
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

}  // namespace detail

// Least-squares slope of the empirical cumulative against delta^2 over the
// smallest `quantile` fraction of spacings; slope estimates P'(0)/2 when the
// density vanishes linearly at zero. Distributions with P(0) > 0 produce a
// diverging local slope, reported through the nonlinear flag.
inline SlopeFit small_slope_fit(const SpacingSeries& s, double quantile = 0.10) {
  if (s.deltas.size() < 1000)
    throw InsufficientData("small_slope_fit requires at least 1000 spacings");
  if (!(quantile > 0.0) || !(quantile <= 1.0))
    throw InvalidInput("small_slope_fit quantile must lie in (0, 1]");
  std::vector<double> sorted = s.deltas;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());

  std::vector<double> x, y;
  const auto window =
      static_cast<std::size_t>(std::floor(quantile * static_cast<double>(sorted.size())));
  for (std::size_t i = 0; i < window; ++i) {
    if (sorted[i] < kTinySpacing) continue;  // flagged degeneracies stay out of the fit
    x.push_back(sorted[i] * sorted[i]);
    y.push_back(static_cast<double>(i + 1) / n);
  }
  if (x.size() < 100)
    throw InsufficientData("small_slope_fit window holds fewer than 100 usable spacings");

  SlopeFit fit;
  fit.window = x.size();
  fit.slope = detail::origin_slope(x, y, 0, x.size());
  double ss_res = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - fit.slope * x[i];
    ss_res += r * r;
    sxx += x[i] * x[i];
  }
  if (x.size() > 1 && sxx > 0.0)
    fit.stderr_ = std::sqrt(ss_res / (static_cast<double>(x.size() - 1) * sxx));
  const double lower = detail::origin_slope(x, y, 0, x.size() / 2);
  const double upper = detail::origin_slope(x, y, x.size() / 2, x.size());
  fit.nonlinear = upper > 0.0 && lower > 1.5 * upper;
  return fit;
}

// sup |F_a - F_b| over the union of both probe sets, both delta-peak
// positions, and a uniform fill grid (captures interior maxima between
// continuous distributions). Left limits are compared alongside values so
// jump points contribute both one-sided gaps. The best coarse point is then
// refined locally: a uniform grid resolves a smooth interior maximum only to
// its spacing, and the shrinking passes push that error below 1e-12.
inline double ks_distance(const SpacingDistribution& a, const SpacingDistribution& b) {
  std::vector<double> grid;
  grid.reserve(a.probes.size() + b.probes.size() + 4100);
  grid.insert(grid.end(), a.probes.begin(), a.probes.end());
  grid.insert(grid.end(), b.probes.begin(), b.probes.end());
  if (a.peak) grid.push_back(a.peak->first);
  if (b.peak) grid.push_back(b.peak->first);
  double hi = std::max(a.support_hint, b.support_hint);
  if (!(hi > 0.0)) hi = 1.0;
  for (int j = 0; j <= 4096; ++j)
    grid.push_back(hi * static_cast<double>(j) / 4096.0);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  const auto gap = [&](double x) {
    return std::max(std::abs(a.cdf(x) - b.cdf(x)),
                    std::abs(a.cdf_left(x) - b.cdf_left(x)));
  };
  double sup = 0.0;
  double arg = 0.0;
  for (double x : grid) {
    const double v = gap(x);
    if (v > sup) {
      sup = v;
      arg = x;
    }
  }
  double half_width = hi / 4096.0;
  for (int round = 0; round < 4; ++round) {
    const double lo = std::max(0.0, arg - half_width);
    const double up = arg + half_width;
    for (int j = 0; j <= 64; ++j) {
      const double x = lo + (up - lo) * static_cast<double>(j) / 64.0;
      const double v = gap(x);
      if (v > sup) {
        sup = v;
        arg = x;
      }
    }
    half_width /= 32.0;
  }
  return sup;
}

inline double cdf_sup_diff(const SpacingDistribution& a, const SpacingDistribution& b) {
  return ks_distance(a, b);
}

}  // namespace qgraph
