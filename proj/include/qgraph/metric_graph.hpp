#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qgraph/errors.hpp"

namespace qgraph {

enum class Boundary { neumann, dirichlet };

// Undirected bond between vertices u and v. u == v is a loop and contributes
// two directed bonds at its vertex.
struct Bond {
  int u = 0;
  int v = 0;
  double length = 0.0;
  bool is_loop() const { return u == v; }
};

// Exact rational coefficient p/q, normalized with q > 0 and gcd(p, q) = 1.
struct Rational {
  long long num = 0;
  long long den = 1;

  Rational() = default;
  Rational(long long p, long long q) : num(p), den(q) {
    if (den == 0) throw InvalidInput("rational coefficient with zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const long long g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational&) const = default;
};

// Detected rational ratio between two lengths: lengths[a] / lengths[b] = p/q.
struct RationalRelation {
  int index_a = 0;
  int index_b = 0;
  long long p = 1;
  long long q = 1;
};

namespace detail {

// Best rational approximation of x with denominator bounded by max_den,
// via the continued-fraction convergents. Returns {p, q}.
inline std::pair<long long, long long> rational_approx(double x, long long max_den) {
  long long p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  double r = x;
  for (int it = 0; it < 64; ++it) {
    const double fl = std::floor(r);
    if (fl > 9e17) break;
    const auto a = static_cast<long long>(fl);
    if (q0 + a * q1 > max_den && q1 > 0) break;
    const long long p2 = a * p1 + p0;
    const long long q2 = a * q1 + q0;
    p0 = p1;
    q0 = q1;
    p1 = p2;
    q1 = q2;
    const double rem = r - fl;
    if (rem < 1e-15) break;
    r = 1.0 / rem;
  }
  return {p1, q1 == 0 ? 1 : q1};
}

// Tests whether a/b is a rational p/q with |p|, |q| <= bound, to relative
// tolerance tol. Returns {found, p, q}.
inline std::tuple<bool, long long, long long> rational_ratio(double a, double b,
                                                             long long bound,
                                                             double tol = 1e-9) {
  const double x = a / b;
  const auto [p, q] = rational_approx(x, bound);
  if (p == 0 || p > bound || q > bound) return {false, 0, 1};
  const double approx = static_cast<double>(p) / static_cast<double>(q);
  if (std::abs(x - approx) <= tol * std::abs(x)) return {true, p, q};
  return {false, 0, 1};
}

}  // namespace detail

// Metric graph: V vertices joined by bonds with positive lengths plus a
// boundary-condition tag. Loops and parallel bonds are allowed.
class MetricGraph {
 public:
  MetricGraph(int vertex_count, std::vector<Bond> bonds,
              Boundary boundary = Boundary::neumann)
      : vertex_count_(vertex_count), bonds_(std::move(bonds)), boundary_(boundary) {
    if (vertex_count_ < 1) throw InvalidInput("graph needs at least one vertex");
    if (bonds_.empty()) throw InvalidInput("graph needs at least one bond");
    for (const Bond& b : bonds_) {
      if (b.u < 0 || b.u >= vertex_count_ || b.v < 0 || b.v >= vertex_count_)
        throw InvalidInput("bond endpoint out of range");
      if (!(b.length > 0.0) || !std::isfinite(b.length))
        throw InvalidInput("bond lengths must be positive and finite");
    }
    valence_.assign(static_cast<std::size_t>(vertex_count_), 0);
    for (const Bond& b : bonds_) {
      valence_[static_cast<std::size_t>(b.u)] += 1;
      valence_[static_cast<std::size_t>(b.v)] += 1;
    }
    detect_commensurate();
  }

  int vertex_count() const { return vertex_count_; }
  int bond_count() const { return static_cast<int>(bonds_.size()); }
  const std::vector<Bond>& bonds() const { return bonds_; }
  Boundary boundary() const { return boundary_; }

  // Number of directed bonds at v; a loop counts twice.
  int valence(int v) const { return valence_[static_cast<std::size_t>(v)]; }

  // Symmetric bond-count matrix; diagonal holds loop counts.
  std::vector<std::vector<int>> connectivity() const {
    std::vector<std::vector<int>> c(
        static_cast<std::size_t>(vertex_count_),
        std::vector<int>(static_cast<std::size_t>(vertex_count_), 0));
    for (const Bond& b : bonds_) {
      if (b.is_loop()) {
        c[static_cast<std::size_t>(b.u)][static_cast<std::size_t>(b.u)] += 1;
      } else {
        c[static_cast<std::size_t>(b.u)][static_cast<std::size_t>(b.v)] += 1;
        c[static_cast<std::size_t>(b.v)][static_cast<std::size_t>(b.u)] += 1;
      }
    }
    return c;
  }

  double total_length() const {
    double sum = 0.0;
    for (const Bond& b : bonds_) sum += b.length;
    return sum;
  }

  // Smoothed spectral density: levels per unit wavenumber.
  double mean_density() const { return total_length() / std::numbers::pi; }

  // Set when some pair of bond lengths has a small rational ratio, so the
  // incommensurability assumptions behind the torus picture do not hold.
  bool commensurate_warning() const { return !commensurate_pairs_.empty(); }
  const std::vector<RationalRelation>& commensurate_pairs() const {
    return commensurate_pairs_;
  }

 private:
  void detect_commensurate(long long bound = 50) {
    const int nb = bond_count();
    for (int a = 0; a < nb; ++a) {
      for (int b = a + 1; b < nb; ++b) {
        const auto [found, p, q] = detail::rational_ratio(
            bonds_[static_cast<std::size_t>(a)].length,
            bonds_[static_cast<std::size_t>(b)].length, bound);
        if (found) commensurate_pairs_.push_back({a, b, p, q});
      }
    }
  }

  int vertex_count_;
  std::vector<Bond> bonds_;
  Boundary boundary_;
  std::vector<int> valence_;
  std::vector<RationalRelation> commensurate_pairs_;
};

// Star: central vertex 0 joined to one leaf per length.
inline MetricGraph build_star(std::span<const double> lengths,
                              Boundary boundary = Boundary::neumann) {
  if (lengths.empty()) throw InvalidInput("star needs at least one bond");
  std::vector<Bond> bonds;
  bonds.reserve(lengths.size());
  for (std::size_t e = 0; e < lengths.size(); ++e) {
    bonds.push_back({0, static_cast<int>(e) + 1, lengths[e]});
  }
  return MetricGraph(static_cast<int>(lengths.size()) + 1, std::move(bonds), boundary);
}

// Complete graph on V vertices; lengths follow pair order
// (0,1), (0,2), ..., (0,V-1), (1,2), ...
inline MetricGraph build_complete(int vertex_count, std::span<const double> lengths,
                                  Boundary boundary = Boundary::neumann) {
  if (vertex_count < 2) throw InvalidInput("complete graph needs at least two vertices");
  const std::size_t need =
      static_cast<std::size_t>(vertex_count) * (vertex_count - 1) / 2;
  if (lengths.size() != need)
    throw InvalidInput("complete graph on " + std::to_string(vertex_count) +
                       " vertices needs " + std::to_string(need) + " lengths");
  std::vector<Bond> bonds;
  bonds.reserve(need);
  std::size_t e = 0;
  for (int u = 0; u < vertex_count; ++u) {
    for (int v = u + 1; v < vertex_count; ++v) {
      bonds.push_back({u, v, lengths[e++]});
    }
  }
  return MetricGraph(vertex_count, std::move(bonds), boundary);
}

// Two loops attached to a single vertex.
inline MetricGraph build_figure_eight(double l1, double l2,
                                      Boundary boundary = Boundary::neumann) {
  return MetricGraph(1, {{0, 0, l1}, {0, 0, l2}}, boundary);
}

// One bond from vertex 0 to vertex 1 plus a loop at vertex 1.
inline MetricGraph build_lasso(double bond_length, double loop_length,
                               Boundary boundary = Boundary::neumann) {
  return MetricGraph(2, {{0, 1, bond_length}, {1, 1, loop_length}}, boundary);
}

// Incommensurate basis for the bond lengths: every bond length is a rational
// combination of the basis entries. coefficients[b][i] multiplies lengths[i].
struct LengthBasis {
  std::vector<double> lengths;
  std::vector<std::vector<Rational>> coefficients;

  int dimension() const { return static_cast<int>(lengths.size()); }

  double reconstruct(std::size_t bond) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < lengths.size(); ++i) {
      sum += coefficients[bond][i].value() * lengths[i];
    }
    return sum;
  }
};

// Greedy basis extraction: each bond length either is a small rational
// multiple of an existing basis entry or becomes a new basis entry. Only
// single-entry multiples are searched; richer integer relations should be
// declared explicitly through a LengthBasis.
inline LengthBasis deduce_basis(const MetricGraph& g, long long max_denominator = 50) {
  LengthBasis basis;
  const auto& bonds = g.bonds();
  for (std::size_t b = 0; b < bonds.size(); ++b) {
    std::vector<Rational> row(basis.lengths.size(), Rational(0, 1));
    bool matched = false;
    for (std::size_t i = 0; i < basis.lengths.size(); ++i) {
      const auto [found, p, q] =
          detail::rational_ratio(bonds[b].length, basis.lengths[i], max_denominator);
      if (found) {
        row[i] = Rational(p, q);
        matched = true;
        break;
      }
    }
    if (!matched) {
      for (auto& existing : basis.coefficients) existing.push_back(Rational(0, 1));
      basis.lengths.push_back(bonds[b].length);
      row.push_back(Rational(1, 1));
    }
    basis.coefficients.push_back(std::move(row));
  }
  return basis;
}

// Result of checking a declared basis against a graph.
struct BasisReport {
  bool ok = false;
  int torus_dimension = 0;
  double max_relative_residual = 0.0;
  std::vector<RationalRelation> relations;  // rational ratios among basis entries
};

// Validates that the basis reconstructs every bond length to 1e-12 relative
// accuracy, that its dimension does not exceed the bond count, and that no
// pair of basis entries hides a small rational relation (searched up to
// |p|, |q| <= search_bound).
inline BasisReport validate(const MetricGraph& g, const LengthBasis& basis,
                            long long search_bound = 50) {
  BasisReport report;
  report.torus_dimension = basis.dimension();
  if (basis.dimension() < 1) throw InvalidInput("basis must contain at least one length");
  if (basis.dimension() > g.bond_count())
    throw InvalidInput("basis dimension exceeds bond count");
  if (basis.coefficients.size() != g.bonds().size())
    throw InvalidInput("basis must provide one coefficient row per bond");
  for (const auto& row : basis.coefficients) {
    if (static_cast<int>(row.size()) != basis.dimension())
      throw InvalidInput("coefficient row size must match basis dimension");
  }
  for (std::size_t b = 0; b < g.bonds().size(); ++b) {
    const double rebuilt = basis.reconstruct(b);
    const double res = std::abs(rebuilt - g.bonds()[b].length) / g.bonds()[b].length;
    report.max_relative_residual = std::max(report.max_relative_residual, res);
  }
  for (int a = 0; a < basis.dimension(); ++a) {
    for (int b = a + 1; b < basis.dimension(); ++b) {
      const auto [found, p, q] = detail::rational_ratio(
          basis.lengths[static_cast<std::size_t>(a)],
          basis.lengths[static_cast<std::size_t>(b)], search_bound);
      if (found) report.relations.push_back({a, b, p, q});
    }
  }
  report.ok = report.relations.empty() && report.max_relative_residual <= 1e-12;
  return report;
}

}  // namespace qgraph
