#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qgraph/errors.hpp"
#include "qgraph/metric_graph.hpp"
#include "qgraph/quadrature.hpp"
#include "qgraph/spacing.hpp"
#include "qgraph/torus.hpp"

namespace qgraph {

// Closed-form nearest-neighbor spacing distribution in the unfolded variable
// (unit mean spacing). The density is the continuous part; an optional delta
// peak carries the remaining mass. kinks lists interior points where the
// density is not smooth, used to split quadrature intervals. Models whose
// density is singular in Delta (the two-length star diverges like 1/sqrt at
// its onset) install weighted_integral, an exact reparameterization that
// normalization() and mean() use instead of direct quadrature.
struct AnalyticSpacing {
  std::string name;
  std::vector<double> lengths;
  std::function<double(double)> density;
  std::function<double(double)> cumulative;
  std::optional<std::pair<double, double>> peak;  // (position, mass)
  double support = std::numeric_limits<double>::infinity();
  std::vector<double> kinks;
  std::function<double(const std::function<double(double)>&, double)> weighted_integral;

  double quad_limit() const {
    return std::isfinite(support) ? support : 64.0;
  }

  double integrate_weighted(const std::function<double(double)>& weight,
                            double tol) const {
    if (weighted_integral) return weighted_integral(weight, tol);
    const double hi = quad_limit();
    std::vector<double> cuts{0.0};
    for (double k : kinks)
      if (k > 0.0 && k < hi) cuts.push_back(k);
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
      // Chunks of at most 2 units: a unit-mean density probed only at the
      // ends and middle of a long interval can look identically zero.
      const double a = cuts[j], b = cuts[j + 1];
      const auto chunks = static_cast<std::size_t>(std::ceil((b - a) / 2.0));
      for (std::size_t c = 0; c < chunks; ++c) {
        const double lo = a + (b - a) * static_cast<double>(c) / chunks;
        const double up = a + (b - a) * static_cast<double>(c + 1) / chunks;
        total += integrate([&](double x) { return density(x) * weight(x); }, lo, up, tol);
      }
    }
    return total;
  }

  double normalization(double tol = 1e-11) const {
    double total = integrate_weighted([](double) { return 1.0; }, tol);
    if (peak) total += peak->second;
    return total;
  }

  double mean(double tol = 1e-11) const {
    double total = integrate_weighted([](double x) { return x; }, tol);
    if (peak) total += peak->first * peak->second;
    return total;
  }

  SpacingDistribution distribution() const {
    SpacingDistribution dist;
    dist.cdf = cumulative;
    const auto cdf = cumulative;
    const auto pk = peak;
    dist.cdf_left = [cdf, pk](double x) {
      double v = cdf(x);
      if (pk && x == pk->first) v -= pk->second;
      return v;
    };
    dist.density = density;
    dist.probes.push_back(0.0);
    for (double k : kinks) dist.probes.push_back(k);
    if (peak) {
      dist.probes.push_back(peak->first);
      dist.peak = peak;
    }
    dist.support_hint = quad_limit();
    std::sort(dist.probes.begin(), dist.probes.end());
    return dist;
  }
};

// ============================ reference models ==============================

inline double poisson_pdf(double delta) { return std::exp(-delta); }

inline double wigner_goe_pdf(double delta) {
  const double c = std::numbers::pi / 4.0;
  return 2.0 * c * delta * std::exp(-c * delta * delta);
}

inline AnalyticSpacing poisson_spacing() {
  AnalyticSpacing m;
  m.name = "poisson";
  m.density = [](double d) { return d < 0.0 ? 0.0 : poisson_pdf(d); };
  m.cumulative = [](double d) { return d < 0.0 ? 0.0 : 1.0 - std::exp(-d); };
  return m;
}

inline AnalyticSpacing wigner_goe_spacing() {
  AnalyticSpacing m;
  m.name = "wigner_goe";
  m.density = [](double d) { return d < 0.0 ? 0.0 : wigner_goe_pdf(d); };
  m.cumulative = [](double d) {
    if (d < 0.0) return 0.0;
    return 1.0 - std::exp(-std::numbers::pi / 4.0 * d * d);
  };
  return m;
}

// ====================== superposed rigid progressions ======================

namespace detail {

// Density of the spacing between consecutive points of the union of rigid
// ladders with rates l_i/L: sum over ordered pairs (left point from ladder k,
// gap closed by ladder j) of survival products, O(n^2) per evaluation.
inline double ladder_density(const std::vector<double>& lengths, double total,
                             double delta) {
  const std::size_t n = lengths.size();
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    q[i] = 1.0 - lengths[i] * delta / total;
    if (q[i] <= 0.0) return 0.0;
  }
  double sum = 0.0;
  std::vector<double> others(n - 1), lo(n - 1), sfx(n);
  for (std::size_t k = 0; k < n; ++k) {
    // Leave-k-out survival products via prefix/suffix over the others.
    std::size_t m = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (i != k) {
        others[m] = q[i];
        lo[m] = lengths[i];
        ++m;
      }
    sfx[m] = 1.0;
    for (std::size_t i = m; i-- > 0;) sfx[i] = sfx[i + 1] * others[i];
    double pref = 1.0;
    double inner = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      inner += lo[j] * pref * sfx[j + 1];
      pref *= others[j];
    }
    sum += lengths[k] * inner;
  }
  return sum / (total * total);
}

}  // namespace detail

inline AnalyticSpacing integrable_pdf(std::vector<double> lengths) {
  if (lengths.size() < 2) throw InvalidInput("integrable_pdf needs at least two lengths");
  for (double l : lengths)
    if (!(l > 0.0)) throw InvalidInput("integrable_pdf lengths must be positive");
  const double total = std::accumulate(lengths.begin(), lengths.end(), 0.0);
  const double l_max = *std::max_element(lengths.begin(), lengths.end());
  const double edge = total / l_max;

  double peak_mass = l_max / total;
  for (double l : lengths)
    if (l != l_max) peak_mass *= 1.0 - l / l_max;
  // A tied maximum contributes a (1 - 1) factor once: drop it explicitly.
  if (std::count(lengths.begin(), lengths.end(), l_max) > 1) peak_mass = 0.0;

  auto params = std::make_shared<std::vector<double>>(lengths);
  auto dens = [params, total](double d) {
    if (d < 0.0) return 0.0;
    return detail::ladder_density(*params, total, d);
  };
  auto grid = std::make_shared<CumulativeGrid>(dens, edge, 8192);

  AnalyticSpacing m;
  m.name = "integrable";
  m.lengths = std::move(lengths);
  m.density = dens;
  m.peak = std::make_pair(edge, peak_mass);
  m.support = edge;
  m.cumulative = [grid, edge, peak_mass](double d) {
    if (d < 0.0) return 0.0;
    if (d >= edge) return grid->total() + peak_mass;
    return grid->at(d);
  };
  return m;
}

inline double integrable_cdf(const std::vector<double>& lengths, double delta) {
  return integrable_pdf(lengths).cumulative(delta);
}

inline double cluster_g0(const std::vector<double>& lengths) {
  if (lengths.empty()) throw InvalidInput("cluster_g0 needs lengths");
  const double total = std::accumulate(lengths.begin(), lengths.end(), 0.0);
  double s2 = 0.0;
  for (double l : lengths) s2 += (l / total) * (l / total);
  return 1.0 - s2;
}

inline double star3_slope(double l1, double l2, double l3) {
  if (!(l1 > 0.0 && l2 > 0.0 && l3 > 0.0))
    throw InvalidInput("star3_slope lengths must be positive");
  const double total = l1 + l2 + l3;
  const double pair_sum = l1 * l2 + l1 * l3 + l2 * l3;
  return std::numbers::pi * std::pow(pair_sum, 1.5) / (total * total * total);
}

// ============================ two-length star ===============================

namespace detail {

// Return-flight geometry on the 2-torus of the star with lengths (l1, l2, l1).
// psi is the continuous decreasing branch of arctan(2 cot u); a flight leaving
// the short section advances the phase G(t) = l2 t + pi/2 - psi(l1 t), which
// is strictly increasing with G' in [l2 + l1/2, l2 + 2 l1]. The long-section
// return time tau2(g) = Ginv(g + pi) - Ginv(g) on (0, g*), g* = l2 pi / l1,
// obeys the reflection identity tau2(g* - g) = tau2(g) (from
// G(T1 - t) = g* + pi - G(t) with T1 = pi/l1), so its interior minimum sits
// exactly at g*/2 and both endpoints equal tau_p = Ginv(pi).
class Star2Geometry {
 public:
  Star2Geometry(double l1, double l2) : l1_(l1), l2_(l2), total_(2.0 * l1 + l2) {
    gstar_ = l2_ * std::numbers::pi / l1_;
    tau_p_ = ginv(std::numbers::pi);
    gmin_ = 0.5 * gstar_;
    tau_min_ = tau2(gmin_);
    verify_profile();
  }

  double l1() const { return l1_; }
  double l2() const { return l2_; }
  double total() const { return total_; }
  double gstar() const { return gstar_; }
  double gamma_min() const { return gmin_; }
  double tau_min() const { return tau_min_; }
  double tau_p() const { return tau_p_; }

  static double psi(double u) {
    const double m = std::floor(u / std::numbers::pi);
    const double v = u - m * std::numbers::pi;
    double base;
    if (v < 1e-300)
      base = std::numbers::pi / 2.0;
    else
      base = std::atan(2.0 / std::tan(v));
    return base - m * std::numbers::pi;
  }

  double uprime(double t) const {
    const double c = std::cos(l1_ * t);
    return l2_ + 2.0 * l1_ / (1.0 + 3.0 * c * c);
  }

  double gfun(double t) const {
    return l2_ * t + std::numbers::pi / 2.0 - psi(l1_ * t);
  }

  // Safeguarded Newton for G(t) = g; G' = uprime is available analytically
  // and bounded, so the bracket [g/G'max, g/G'min] always contains the root.
  double ginv(double g) const {
    if (g <= 0.0) return 0.0;
    double lo = g / (l2_ + 2.0 * l1_);
    double hi = g / (l2_ + 0.5 * l1_);
    double t = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      const double r = gfun(t) - g;
      if (r == 0.0) return t;
      (r > 0.0 ? hi : lo) = t;
      double next = t - r / uprime(t);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - t) <= 1e-15 * std::max(1.0, std::abs(next))) return next;
      t = next;
      if (hi - lo <= 1e-15 * std::max(1.0, hi)) break;
    }
    return t;
  }

  double tau2(double g) const { return ginv(g + std::numbers::pi) - ginv(g); }

  double tau2prime(double g) const {
    return 1.0 / uprime(ginv(g + std::numbers::pi)) - 1.0 / uprime(ginv(g));
  }

  // Root of tau2(g) = tau on the decreasing branch (0, g*/2); the increasing
  // branch root is g* - gamma_a by reflection. NaN when tau is outside
  // [tau_min, tau_p).
  double gamma_a(double tau) const {
    if (tau >= tau_p_) return std::numeric_limits<double>::quiet_NaN();
    if (tau <= tau_min_)
      return tau == tau_min_ ? gmin_ : std::numeric_limits<double>::quiet_NaN();
    double lo = 0.0, hi = gmin_;
    double g = 0.5 * gmin_;
    for (int it = 0; it < 200; ++it) {
      const double r = tau2(g) - tau;
      if (r == 0.0) return g;
      (r > 0.0 ? lo : hi) = g;  // tau2 decreases on this branch
      const double d = tau2prime(g);
      double next = (d != 0.0) ? g - r / d : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - g) <= 1e-14 * std::max(1.0, gstar_)) return next;
      g = next;
      if (hi - lo <= 1e-14 * std::max(1.0, gstar_)) break;
    }
    return g;
  }

 private:
  void verify_profile() const {
    if (!(tau_min_ < tau_p_))
      throw Error("two-length star return profile outside the supported regime");
    if (std::abs(tau2(gstar_) - tau_p_) > 1e-9 * tau_p_)
      throw Error("two-length star return profile broke the reflection identity");
    const int cells = 128;
    double prev = tau2(gstar_ * 0.5 / cells);
    for (int j = 1; j <= cells / 2; ++j) {
      // Sample the decreasing branch only; reflection covers the other half.
      const double g = gmin_ * static_cast<double>(j) / (cells / 2);
      const double v = tau2(g);
      if (v > prev + 1e-12)
        throw Error("two-length star return profile is not unimodal");
      prev = v;
    }
  }

  double l1_, l2_, total_;
  double gstar_ = 0.0, gmin_ = 0.0;
  double tau_min_ = 0.0, tau_p_ = 0.0;
};

}  // namespace detail

// Spacing distribution of the star with lengths (l1, l2, l1): a direct term
// from flights between different sections plus the long-section return term,
// obtained by numerically inverting tau2. constant_gamma replaces the exact
// return term by its linear-profile approximation (flat on the same support).
inline AnalyticSpacing star2_pdf(double l1, double l2, bool constant_gamma = false) {
  if (!(l1 > 0.0 && l2 > 0.0)) throw InvalidInput("star2_pdf lengths must be positive");
  auto geo = std::make_shared<detail::Star2Geometry>(l1, l2);
  const double total = geo->total();
  const double scale = std::numbers::pi / total;  // tau = scale * Delta
  const double d_min = geo->tau_min() / scale;
  const double d_p = geo->tau_p() / scale;
  const double pref = 2.0 * l1 / (total * total);
  const double gamma_flat = 0.5 * geo->gstar() / (geo->tau_p() - geo->tau_min());

  AnalyticSpacing m;
  m.name = constant_gamma ? "star2_constant_gamma" : "star2";
  m.lengths = {l1, l2, l1};
  m.support = d_p;
  m.kinks = {d_min, d_p};
  if (!constant_gamma) {
    // Integrals against the density, with the return term computed in the
    // flight parameter where it is smooth: Gamma(tau) dtau pushes forward to
    // dgamma/2 summed over the two symmetric branches.
    m.weighted_integral = [geo, scale, pref](const std::function<double(double)>& w,
                                             double tol) {
      const double direct = integrate(
          [&](double d) { return w(d) * pref * geo->uprime(scale * d); }, 0.0,
          geo->tau_p() / scale, 0.5 * tol);
      const double flights =
          pref / (2.0 * scale) *
          integrate([&](double g) { return w(geo->tau2(g) / scale); }, 0.0,
                    geo->gstar(), 0.5 * tol * scale / pref);
      return direct + flights;
    };
  }

  m.density = [geo, scale, pref, gamma_flat, constant_gamma](double delta) {
    if (delta <= 0.0) return 0.0;
    const double tau = scale * delta;
    if (tau >= geo->tau_p()) return 0.0;
    double value = pref * geo->uprime(tau);
    if (tau > geo->tau_min()) {
      if (constant_gamma) {
        value += pref * gamma_flat;
      } else {
        // Reflection pairs the two inversion branches, so the return term is
        // twice the half-sum: 1/|tau2'| at the decreasing-branch root.
        const double ga = geo->gamma_a(tau);
        const double slope = geo->tau2prime(ga);
        if (!std::isfinite(ga) || slope == 0.0)
          throw Error("return-term inversion failed at spacing " + std::to_string(delta));
        value += pref / std::abs(slope);
      }
    }
    return value;
  };

  const double total_len = total;
  m.cumulative = [geo, scale, total_len, l1, l2, constant_gamma](double delta) {
    if (delta <= 0.0) return 0.0;
    const double tau = scale * delta;
    const double direct =
        2.0 * l1 / (total_len * std::numbers::pi) *
        std::min(geo->gfun(std::min(tau, geo->tau_p())), std::numbers::pi);
    double measure = 0.0;
    if (tau > geo->tau_min()) {
      if (constant_gamma) {
        measure = geo->gstar() *
                  std::min(1.0, (tau - geo->tau_min()) / (geo->tau_p() - geo->tau_min()));
      } else if (tau >= geo->tau_p()) {
        measure = geo->gstar();
      } else {
        measure = geo->gstar() - 2.0 * geo->gamma_a(tau);
      }
    }
    return direct + (l2 / total_len) * measure / geo->gstar();
  };
  return m;
}

// Minimal unfolded spacing of the star with lengths (l1, l2, p*l1), computed
// from the section geometry by direct quadrature. For even p the section
// branches avoid each other and the spacing distribution has a hard gap; for
// odd p the branches intersect and the minimum tends to zero with the grid.
inline double star2_gap_case(double l1, double l2, int p,
                             const QuadratureSettings& settings = {}) {
  if (!(l1 > 0.0 && l2 > 0.0) || p < 1)
    throw InvalidInput("star2_gap_case needs positive lengths and p >= 1");
  const std::vector<double> arm_lengths{l1, l2, static_cast<double>(p) * l1};
  const MetricGraph g = build_star(arm_lengths);
  const LengthBasis basis = deduce_basis(g);
  if (basis.dimension() != 2)
    throw Error("gap-case star did not reduce to a two-length basis");
  auto [flow, surface] = secular_surface(g, basis);
  const QuadratureResult quad = quadrature_spacing_2d(flow, surface, settings);
  return quad.min_return_delta;
}

// =========================== small loop graphs ==============================

inline AnalyticSpacing figure_eight_pdf() {
  AnalyticSpacing m;
  m.name = "figure_eight";
  m.support = 2.0;
  m.density = [](double d) { return (d > 0.0 && d < 2.0) ? 0.5 : 0.0; };
  m.cumulative = [](double d) { return std::clamp(d / 2.0, 0.0, 1.0); };
  return m;
}

inline double lasso_p0(double bond_length, double loop_length) {
  if (!(bond_length > 0.0 && loop_length > 0.0))
    throw InvalidInput("lasso_p0 lengths must be positive");
  return loop_length / (bond_length + loop_length);
}

}  // namespace qgraph
