#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include <qgraph/errors.hpp>
#include <qgraph/metric_graph.hpp>

using namespace qgraph;

TEST_CASE("star builder wires a central vertex to one leaf per arm") {
  const std::vector<double> lengths{1.0, 2.0, 3.0};
  const MetricGraph g = build_star(lengths);
  REQUIRE(g.vertex_count() == 4);
  REQUIRE(g.bond_count() == 3);
  CHECK(g.valence(0) == 3);
  for (int v = 1; v < 4; ++v) CHECK(g.valence(v) == 1);
  CHECK(g.total_length() == Catch::Approx(6.0));
  CHECK(g.mean_density() == Catch::Approx(6.0 / std::numbers::pi));
}

TEST_CASE("complete graph builder on five vertices") {
  std::vector<double> lengths;
  for (int i = 1; i <= 10; ++i) lengths.push_back(std::sqrt(static_cast<double>(i) + 1.1));
  const MetricGraph g = build_complete(5, lengths);
  REQUIRE(g.vertex_count() == 5);
  REQUIRE(g.bond_count() == 10);
  for (int v = 0; v < 5; ++v) CHECK(g.valence(v) == 4);
  CHECK_THROWS_AS(build_complete(5, std::vector<double>{1.0, 2.0}), InvalidInput);
}

TEST_CASE("loops count twice toward valence") {
  const MetricGraph eight = build_figure_eight(std::sqrt(2.0), std::sqrt(3.0));
  REQUIRE(eight.vertex_count() == 1);
  REQUIRE(eight.bond_count() == 2);
  CHECK(eight.valence(0) == 4);

  const MetricGraph lasso = build_lasso(std::sqrt(2.0), std::sqrt(3.0));
  REQUIRE(lasso.vertex_count() == 2);
  CHECK(lasso.valence(0) == 1);
  CHECK(lasso.valence(1) == 3);
  CHECK(lasso.bonds()[1].is_loop());
}

TEST_CASE("invalid graphs are rejected") {
  CHECK_THROWS_AS(MetricGraph(2, {}), InvalidInput);
  CHECK_THROWS_AS(MetricGraph(2, {{0, 2, 1.0}}), InvalidInput);
  CHECK_THROWS_AS(MetricGraph(2, {{0, 1, 0.0}}), InvalidInput);
  CHECK_THROWS_AS(MetricGraph(2, {{0, 1, -1.0}}), InvalidInput);
  CHECK_THROWS_AS(MetricGraph(0, {{0, 0, 1.0}}), InvalidInput);
}

TEST_CASE("rational length relations are detected") {
  const MetricGraph commensurate = build_star(std::vector<double>{1.0, 1.5, std::numbers::pi});
  CHECK(commensurate.commensurate_warning());

  const MetricGraph generic =
      build_star(std::vector<double>{std::numbers::pi, std::exp(1.0), std::sqrt(2.0)});
  CHECK_FALSE(generic.commensurate_warning());
}

TEST_CASE("basis deduction keeps incommensurate lengths independent") {
  const MetricGraph g =
      build_star(std::vector<double>{std::numbers::pi, 3.183459012, 3.1442336073});
  const LengthBasis basis = deduce_basis(g);
  REQUIRE(basis.dimension() == 3);
  const BasisReport report = validate(g, basis);
  CHECK(report.ok);
  CHECK(report.torus_dimension == 3);
  CHECK(report.max_relative_residual < 1e-12);
}

TEST_CASE("basis deduction merges rationally related lengths") {
  SECTION("repeated length") {
    const MetricGraph g =
        build_star(std::vector<double>{std::numbers::pi, 1.53183459012, std::numbers::pi});
    const LengthBasis basis = deduce_basis(g);
    REQUIRE(basis.dimension() == 2);
    for (std::size_t b = 0; b < 3; ++b)
      CHECK(basis.reconstruct(b) == Catch::Approx(g.bonds()[b].length).epsilon(1e-12));
  }
  SECTION("integer multiple") {
    const double l1 = std::sqrt(2.0), l2 = std::sqrt(3.0);
    const MetricGraph g = build_star(std::vector<double>{l1, l2, 2.0 * l1});
    const LengthBasis basis = deduce_basis(g);
    REQUIRE(basis.dimension() == 2);
    const BasisReport report = validate(g, basis);
    CHECK(report.ok);
    CHECK(report.max_relative_residual < 1e-12);
  }
  SECTION("small-denominator ratio is reported") {
    const MetricGraph g = build_star(std::vector<double>{1.0, 1.5, std::sqrt(5.0)});
    const LengthBasis basis = deduce_basis(g);
    CHECK(basis.dimension() == 2);
    const BasisReport report = validate(g, basis);
    CHECK(report.torus_dimension == 2);
  }
}

TEST_CASE("boundary tag round-trips") {
  const MetricGraph g(2, {{0, 1, 1.0}}, Boundary::dirichlet);
  CHECK(g.boundary() == Boundary::dirichlet);
}
