#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <qgraph/analytic.hpp>
#include <qgraph/rng.hpp>
#include <qgraph/spacing.hpp>

#include "oracles.hpp"

using namespace qgraph;

namespace {

// First n entries of the 30-bond family: sqrt(i) with five substituted
// members so that all ratios stay irrational.
std::vector<double> family_lengths(int n) {
  std::vector<double> out;
  for (int i = 1; i <= n; ++i) {
    double v = std::sqrt(static_cast<double>(i));
    if (i == 1) v = std::sqrt(167.0);
    if (i == 4) v = std::sqrt(107.0);
    if (i == 8) v = std::exp(1.0);
    if (i == 9) v = std::sqrt(105.0);
    if (i == 16) v = std::sqrt(119.0);
    if (i == 25) v = std::sqrt(134.0);
    out.push_back(v);
  }
  return out;
}

}  // namespace

TEST_CASE("reference models are normalized with unit mean") {
  for (const AnalyticSpacing& m : {poisson_spacing(), wigner_goe_spacing(),
                                   figure_eight_pdf()}) {
    CHECK(m.normalization() == Catch::Approx(1.0).margin(1e-9));
    CHECK(m.mean() == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("decoupled-bond law is normalized for random length sets") {
  UniformRng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 2 + trial;
    std::vector<double> lengths;
    for (int i = 0; i < n; ++i) lengths.push_back(rng.in(0.6, 2.9));
    const AnalyticSpacing m = integrable_pdf(lengths);
    INFO("trial " << trial);
    CHECK(m.normalization() == Catch::Approx(1.0).margin(1e-9));
    CHECK(m.mean() == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("decoupled-bond law: exact zero-spacing density and peak") {
  const std::vector<double> lengths = family_lengths(8);
  double total = 0.0;
  for (double l : lengths) total += l;
  const AnalyticSpacing m = integrable_pdf(lengths);

  double p0 = 1.0;
  for (double l : lengths) p0 -= (l / total) * (l / total);
  CHECK(m.density(0.0) == Catch::Approx(p0).margin(1e-12));

  REQUIRE(m.peak.has_value());
  CHECK(m.peak->first == Catch::Approx(total / lengths[0]).margin(1e-12));
  CHECK(m.peak->second > 0.0);
  CHECK(std::isfinite(m.support));
  CHECK(m.support == Catch::Approx(total / lengths[0]).margin(1e-12));
}

TEST_CASE("decoupled-bond law matches a brute-force spectrum") {
  UniformRng rng(37);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> lengths;
    const int n = 2 + (trial % 3);
    for (int i = 0; i < n; ++i) lengths.push_back(rng.in(0.7, 2.5));
    double total = 0.0;
    for (double l : lengths) total += l;

    const double k_max = 2.0e4 * std::numbers::pi / total;  // ~2e4 levels
    const std::vector<double> ks = oracle::decoupled_spectrum(lengths, k_max);
    std::vector<double> deltas = oracle::unfold(ks, total);

    const AnalyticSpacing m = integrable_pdf(lengths);
    // The law carries an atom at the densest ladder's unfolded step; unite the
    // rounding-spread empirical ties with it and compare both CDF sides.
    REQUIRE(m.peak.has_value());
    oracle::snap_to_atom(deltas, m.peak->first);
    const auto left = [&](double x) {
      return m.cumulative(std::nextafter(x, -std::numeric_limits<double>::infinity()));
    };
    const double sup = oracle::sample_vs_cdf_ks(deltas, m.cumulative, left);
    INFO("trial " << trial << " with " << deltas.size() << " spacings");
    CHECK(sup < 0.02);
  }
}

TEST_CASE("distance to the memoryless law shrinks along the bond family") {
  const AnalyticSpacing poisson = poisson_spacing();
  double prev = 2.0;
  for (int n : {2, 3, 8, 30}) {
    const AnalyticSpacing m = integrable_pdf(family_lengths(n));
    const double d = ks_distance(m.distribution(), poisson.distribution());
    INFO("family size " << n);
    CHECK(d < prev);
    prev = d;
  }
  CHECK(prev < 0.03);  // the 30-bond member sits close to the limit
}

TEST_CASE("level repulsion coefficient formula") {
  const double l1 = std::numbers::pi, l2 = 3.183459012, l3 = 3.1442336073;
  const double total = l1 + l2 + l3;
  const double want =
      std::numbers::pi * std::pow(l1 * l2 + l1 * l3 + l2 * l3, 1.5) / std::pow(total, 3.0);
  CHECK(star3_slope(l1, l2, l3) == Catch::Approx(want).margin(1e-12));
  CHECK(star3_slope(l1, l2, l3) == Catch::Approx(0.604583108).margin(1e-8));
}

TEST_CASE("two-length star law: frozen geometry") {
  const double l1 = std::numbers::pi, l2 = 1.53183459012;
  const AnalyticSpacing m = star2_pdf(l1, l2);

  SECTION("support edge and onset kink") {
    REQUIRE(std::isfinite(m.support));
    CHECK(m.support == Catch::Approx(1.522392).margin(2e-6));
    REQUIRE(m.kinks.size() >= 1);
    // Onset of the turning-point branch.
    CHECK(m.kinks.front() == Catch::Approx(1.345347).margin(2e-6));
    CHECK(m.density(m.support + 1e-3) == 0.0);
    CHECK(m.cumulative(m.support + 1e-3) == Catch::Approx(1.0).margin(1e-9));
  }
  SECTION("onset kink of the density") {
    const double onset = 1.345347;
    // The turning-point branch switches on with an integrable divergence:
    // a sharp rise just above the onset, smooth direct term below.
    CHECK(m.density(onset + 1e-4) - m.density(onset - 1e-4) > 1.0);
    CHECK(m.density(onset + 1e-5) > m.density(onset + 1e-3));
  }
  SECTION("normalization and mean") {
    CHECK(m.normalization() == Catch::Approx(1.0).margin(1e-6));
    CHECK(m.mean() == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("two-length star law: constant-coupling variant") {
  const double l1 = std::numbers::pi, l2 = 1.53183459012;
  const AnalyticSpacing m = star2_pdf(l1, l2, true);
  // The simplified variant replaces the turning-point factor by a constant,
  // so its onset step is finite with frozen magnitude.
  const double onset = 1.345347;
  const double below = m.density(onset - 1e-6);
  const double above = m.density(onset + 1e-6);
  CHECK(above - below == Catch::Approx(1.107133).margin(1e-4));
  CHECK(above == Catch::Approx(1.880885).margin(1e-4));
  // It stays normalized by construction, but the mean picks up an intrinsic
  // deviation; pin the observed value.
  CHECK(m.normalization() == Catch::Approx(1.0).margin(1e-6));
  CHECK(m.mean() == Catch::Approx(1.005098607).margin(1e-4));
}

TEST_CASE("loop graph laws") {
  const AnalyticSpacing eight = figure_eight_pdf();
  CHECK(eight.support == 2.0);
  CHECK(eight.density(0.7) == Catch::Approx(0.5));
  CHECK(eight.density(2.3) == 0.0);
  CHECK(eight.cumulative(1.0) == Catch::Approx(0.5));

  CHECK(lasso_p0(std::sqrt(2.0), std::sqrt(3.0)) ==
        Catch::Approx(std::sqrt(3.0) / (std::sqrt(2.0) + std::sqrt(3.0))).margin(1e-15));
  CHECK(lasso_p0(std::sqrt(2.0), std::sqrt(3.0)) == Catch::Approx(0.55051).margin(1e-5));
}

TEST_CASE("spacing laws evaluate to sensible densities") {
  CHECK(poisson_pdf(0.0) == Catch::Approx(1.0));
  CHECK(wigner_goe_pdf(0.0) == Catch::Approx(0.0).margin(1e-15));
  const double peak_x = std::sqrt(2.0 / std::numbers::pi);
  CHECK(wigner_goe_pdf(peak_x) > wigner_goe_pdf(peak_x - 0.05));
  CHECK(wigner_goe_pdf(peak_x) > wigner_goe_pdf(peak_x + 0.05));
}

TEST_CASE("gap case argument validation") {
  CHECK_THROWS_AS(star2_gap_case(-1.0, 1.0, 2), InvalidInput);
  CHECK_THROWS_AS(star2_gap_case(1.0, 1.0, 0), InvalidInput);
}
