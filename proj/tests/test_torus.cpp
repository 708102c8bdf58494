// Section-geometry layer: the linear flow on the length torus, the secular
// surface it crosses, sheet counts with their length sum rule, first-return
// statistics against the direct spectrum, and the planar quadrature law.
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "qgraph/analytic.hpp"
#include "qgraph/errors.hpp"
#include "qgraph/metric_graph.hpp"
#include "qgraph/rng.hpp"
#include "qgraph/secular.hpp"
#include "qgraph/spacing.hpp"
#include "qgraph/spectrum.hpp"
#include "qgraph/torus.hpp"

using namespace qgraph;

namespace {

MetricGraph star3_graph() {
  const std::vector<double> arms = {std::numbers::pi, 3.183459012, 3.1442336073};
  return build_star(arms);
}

MetricGraph star2_graph() {
  const std::vector<double> arms = {std::numbers::pi, std::numbers::pi, 1.53183459012};
  return build_star(arms);
}

MetricGraph gap_star_graph() {
  const double l1 = std::sqrt(2.0), l2 = std::sqrt(3.0);
  const std::vector<double> arms = {l1, l2, 2.0 * l1};
  return build_star(arms);
}

MetricGraph figure_eight_graph() {
  return build_figure_eight(1.8171205928321397, 1.3290173915275787);
}

MetricGraph lasso_graph() { return build_lasso(std::sqrt(2.0), std::sqrt(3.0)); }

std::vector<int> sorted_sheets(const SumRuleReport& report) {
  std::vector<int> s = report.sheets;
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace

TEST_CASE("surface values match the secular function along the physical line") {
  const MetricGraph graphs[] = {star3_graph(), star2_graph(), figure_eight_graph(),
                                lasso_graph()};
  UniformRng rng(71);
  for (const MetricGraph& g : graphs) {
    const LengthBasis basis = deduce_basis(g);
    const auto [flow, f] = secular_surface(g, basis);
    CHECK(flow.dimension() == basis.dimension());
    CHECK(f.total_length() == Catch::Approx(g.total_length()).epsilon(1e-12));
    std::vector<double> x(basis.lengths.size());
    for (int trial = 0; trial < 60; ++trial) {
      const double k = rng.in(0.2, 25.0);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = k * basis.lengths[i];
      const double got = f(x);
      const double want = secular_value(g, k);
      REQUIRE(std::abs(got - want) <= 1e-9 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST_CASE("sheet counts obey the length sum rule on the reference graphs") {
  struct Case {
    MetricGraph g;
    std::vector<int> sheets;  // sorted
  };
  const Case cases[] = {
      {star3_graph(), {2, 2, 2}}, {star2_graph(), {2, 4}},   {gap_star_graph(), {2, 6}},
      {figure_eight_graph(), {2, 2}}, {lasso_graph(), {2, 2}},
  };
  for (const Case& c : cases) {
    const LengthBasis basis = deduce_basis(c.g);
    const SumRuleReport report = verify_sum_rule(c.g, basis);
    CHECK(sorted_sheets(report) == c.sheets);
    CHECK(std::abs(report.lhs - report.rhs) <= 1e-9 * report.rhs);
    CHECK(report.rhs == Catch::Approx(2.0 * c.g.total_length()).epsilon(1e-12));
  }
}

TEST_CASE("sheet counts obey the length sum rule on random graphs") {
  UniformRng rng(2025);
  std::vector<MetricGraph> graphs;
  for (int arms = 3; arms <= 5; ++arms) {
    std::vector<double> lengths;
    for (int i = 0; i < arms; ++i) lengths.push_back(rng.in(0.7, 2.9));
    graphs.push_back(build_star(lengths));
  }
  {
    std::vector<double> lengths;
    for (int i = 0; i < 6; ++i) lengths.push_back(rng.in(0.7, 2.9));
    graphs.push_back(build_complete(4, lengths));
  }
  graphs.push_back(build_lasso(rng.in(0.7, 2.9), rng.in(0.7, 2.9)));
  REQUIRE(graphs.size() == 5);
  for (const MetricGraph& g : graphs) {
    const LengthBasis basis = deduce_basis(g);
    SumRuleReport report;
    REQUIRE_NOTHROW(report = verify_sum_rule(g, basis));
    CHECK(std::abs(report.lhs - report.rhs) <= 1e-9 * report.rhs);
    for (int m : report.sheets) CHECK(m >= 2);
  }
}

TEST_CASE("first-return crossing rate reproduces the mean density") {
  const MetricGraph g = star2_graph();
  const LengthBasis basis = deduce_basis(g);
  const auto [flow, f] = secular_surface(g, basis);
  const ReturnSample sample = first_returns(flow, f, {0.37, 1.13}, 12000);
  REQUIRE(sample.taus.size() == 12000);
  CHECK(sample.crossings >= 12001);
  const double elapsed = std::accumulate(sample.taus.begin(), sample.taus.end(), 0.0);
  const double rate = static_cast<double>(sample.taus.size()) / elapsed;
  const double density = g.total_length() / std::numbers::pi;
  CHECK(std::abs(rate - density) / density < 0.005);
}

TEST_CASE("trajectory spacings match the direct spectrum") {
  const MetricGraph graphs[] = {figure_eight_graph(), star2_graph()};
  for (const MetricGraph& g : graphs) {
    const std::vector<double> levels = find_first_levels(g, 4097);
    const SpacingSeries direct = unfold(levels, g.mean_density());
    REQUIRE(direct.count() >= 4096);

    const LengthBasis basis = deduce_basis(g);
    const auto [flow, f] = secular_surface(g, basis);
    const SpacingSeries traj = sample_return_spacings(flow, f, 4096, 909);
    REQUIRE(traj.count() == 4096);
    // Unfolded means agree with the unit normalization to sampling accuracy.
    CHECK(traj.mean() == Catch::Approx(1.0).margin(0.05));

    const double ks = oracle::two_sample_ks(direct.deltas, traj.deltas);
    INFO("two-sample KS " << ks);
    CHECK(ks < 3.0 / std::sqrt(4096.0));
  }
}

TEST_CASE("planar quadrature reproduces the section law", "[quadrature]") {
  QuadratureSettings settings;
  settings.grid_size = 512;  // fast variant; the acceptance run uses 2048

  struct Case {
    MetricGraph g;
    AnalyticSpacing law;
    bool has_law = true;
  };
  Case cases[] = {
      {star2_graph(), star2_pdf(std::numbers::pi, 1.53183459012), true},
      {figure_eight_graph(), figure_eight_pdf(), true},
      {lasso_graph(), figure_eight_pdf(), false},
  };
  for (Case& c : cases) {
    const LengthBasis basis = deduce_basis(c.g);
    const auto [flow, f] = secular_surface(c.g, basis);
    const QuadratureResult quad = quadrature_spacing_2d(flow, f, settings);
    const double density = c.g.total_length() / std::numbers::pi;
    INFO("flux " << quad.flux_density << " vs " << density);
    CHECK(std::abs(quad.flux_density - density) / density < 0.01);
    CHECK(quad.segment_count > 0);
    CHECK(quad.branch_count >= 2);

    const SpacingSeries traj = sample_return_spacings(flow, f, 4096, 1213);
    const double ks_traj = ks_distance(quad.distribution, empirical_cdf(traj));
    INFO("KS vs trajectory " << ks_traj);
    CHECK(ks_traj < 0.03);

    if (c.has_law) {
      const double ks_law = ks_distance(quad.distribution, c.law.distribution());
      INFO("KS vs closed form " << ks_law);
      CHECK(ks_law < 0.02);
    }
  }
}

TEST_CASE("even arm multiples open a gap in the return spacings", "[quadrature]") {
  const double l1 = std::sqrt(2.0), l2 = std::sqrt(3.0);
  // Two arms in ratio 2:1 keep the section branches apart: hard minimal spacing.
  const double gap_even = star2_gap_case(l1, l2, 2);
  CHECK(gap_even == Catch::Approx(0.564286783).margin(5e-4));
  // Ratio 3:1 lets the branches cross, so the minimum collapses toward zero.
  const double gap_odd = star2_gap_case(l1, l2, 3);
  CHECK(gap_odd < 0.01);
  CHECK(gap_odd >= 0.0);
}

TEST_CASE("section layer validates its inputs") {
  const MetricGraph g = star2_graph();
  const LengthBasis basis = deduce_basis(g);
  const auto [flow, f] = secular_surface(g, basis);
  CHECK_THROWS_AS(sheet_count(f, 7), InvalidInput);
  CHECK_THROWS_AS(sheet_count(f, 0, 4), InvalidInput);
  CHECK_THROWS_AS(first_returns(flow, f, {0.1}, 10), InvalidInput);
  CHECK_THROWS_AS(first_returns(flow, f, {0.1, 0.2}, 0), InvalidInput);
  CHECK_THROWS_AS(sample_return_spacings(flow, f, 0, 1), InvalidInput);

  const MetricGraph g3 = star3_graph();
  const LengthBasis basis3 = deduce_basis(g3);
  const auto [flow3, f3] = secular_surface(g3, basis3);
  CHECK_THROWS_AS(quadrature_spacing_2d(flow3, f3), UnsupportedVariant);
}
