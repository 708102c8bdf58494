#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "qgraph/errors.hpp"
#include "qgraph/metric_graph.hpp"

namespace qgraph {

// ===================== directed-bond scattering matrices =====================
//
// Directed bonds are indexed 2b (u -> v) and 2b+1 (v -> u) for undirected
// bond b = (u, v). Both directions carry the undirected length.

// Vertex transition matrix T: amplitude for an excitation arriving along
// directed bond `in` at vertex w to leave along directed bond `out` is
// 2/valence(w) minus 1 on the exact reversal. T is real orthogonal.
inline Eigen::MatrixXd vertex_transition(const MetricGraph& g) {
  const int nd = 2 * g.bond_count();
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(nd, nd);
  auto origin = [&](int d) {
    const Bond& b = g.bonds()[static_cast<std::size_t>(d / 2)];
    return (d % 2 == 0) ? b.u : b.v;
  };
  auto terminal = [&](int d) {
    const Bond& b = g.bonds()[static_cast<std::size_t>(d / 2)];
    return (d % 2 == 0) ? b.v : b.u;
  };
  for (int in = 0; in < nd; ++in) {
    const int w = terminal(in);
    const double amp = 2.0 / static_cast<double>(g.valence(w));
    for (int out = 0; out < nd; ++out) {
      if (origin(out) != w) continue;
      t(out, in) = amp - ((out ^ 1) == in ? 1.0 : 0.0);
    }
  }
  return t;
}

struct BondScattering {
  double k = 0.0;
  Eigen::MatrixXcd s;          // S(k) = D(k) T, unitary 2B x 2B
  Eigen::VectorXcd phases;     // diagonal of D(k): e^{i k l}
  Eigen::MatrixXd transition;  // T
};

inline BondScattering bond_scattering(const MetricGraph& g, double k) {
  if (g.boundary() != Boundary::neumann)
    throw UnsupportedVariant(
        "bond scattering is defined for the zero-strength vertex condition only");
  BondScattering out;
  out.k = k;
  out.transition = vertex_transition(g);
  const int nd = 2 * g.bond_count();
  out.phases.resize(nd);
  for (int d = 0; d < nd; ++d) {
    const double l = g.bonds()[static_cast<std::size_t>(d / 2)].length;
    out.phases(d) = std::polar(1.0, k * l);
  }
  out.s = out.phases.asDiagonal() * out.transition;
  return out;
}

// ========================== vertex-condition matrix =========================

struct VertexSecular {
  double k = 0.0;
  Eigen::MatrixXd h;    // V x V current-conservation matrix
  double min_pole_gap;  // distance metric to the nearest entry pole (see below)
};

namespace detail {

// Distance-to-pole metric for one bond phase: |sin theta| for a regular bond
// (entries carry cot and 1/sin), |cos(theta/2)| for a loop (entry carries
// tan(theta/2)).
inline double pole_gap(bool is_loop, double theta) {
  return is_loop ? std::abs(std::cos(0.5 * theta)) : std::abs(std::sin(theta));
}

}  // namespace detail

// Builds h(k): for bond (u, v) of length l the rows of u and v pick up
// -cos(kl)/sin(kl) on the diagonal and 1/sin(kl) off-diagonal; a loop at u
// adds 2 tan(kl/2) to the diagonal. det h = 0 at eigenvalues that are not
// simultaneously zeros of some sin(k l_b).
inline VertexSecular vertex_secular(const MetricGraph& g, double k) {
  if (g.boundary() != Boundary::neumann)
    throw UnsupportedVariant(
        "vertex-condition matrix is defined for the zero-strength case only");
  VertexSecular out;
  out.k = k;
  const int nv = g.vertex_count();
  out.h = Eigen::MatrixXd::Zero(nv, nv);
  out.min_pole_gap = 2.0;
  for (const Bond& b : g.bonds()) {
    const double theta = k * b.length;
    out.min_pole_gap = std::min(out.min_pole_gap, detail::pole_gap(b.is_loop(), theta));
    if (b.is_loop()) {
      out.h(b.u, b.u) += 2.0 * std::tan(0.5 * theta);
    } else {
      const double s = std::sin(theta);
      const double c = std::cos(theta);
      out.h(b.u, b.u) -= c / s;
      out.h(b.v, b.v) -= c / s;
      out.h(b.u, b.v) += 1.0 / s;
      out.h(b.v, b.u) += 1.0 / s;
    }
  }
  return out;
}

// Wavenumbers in (k_lo, k_hi] where some sin(k l_b) vanishes, sorted.
inline std::vector<double> sin_poles_in_range(const MetricGraph& g, double k_lo,
                                              double k_hi) {
  std::vector<double> poles;
  for (const Bond& b : g.bonds()) {
    const double spacing = std::numbers::pi / b.length;
    for (auto m = static_cast<long long>(std::floor(k_lo / spacing)) + 1;
         static_cast<double>(m) * spacing <= k_hi; ++m) {
      if (m <= 0) continue;
      poles.push_back(static_cast<double>(m) * spacing);
    }
  }
  std::sort(poles.begin(), poles.end());
  return poles;
}

// =================== regularized secular function on phases ==================
//
// f(theta) = det h(theta) * prod_b sin(theta_b) with theta_b the phase of
// bond b. The product cancels every entry pole, so f extends to a real
// analytic function of the phases. Numerically the cancellation happens
// inside the determinant, so near a pole the raw formula loses accuracy;
// within a small guard band the value is recovered instead by symmetric
// cubic interpolation from four evaluations shifted along the offending
// phases. The interpolation nodes stay clear of every pole by construction.
class PhaseSecular {
 public:
  explicit PhaseSecular(const MetricGraph& g) : graph_(&g) {
    if (g.boundary() != Boundary::neumann)
      throw UnsupportedVariant(
          "secular function is defined for the zero-strength case only");
    const auto nv = static_cast<Eigen::Index>(g.vertex_count());
    h_.resize(nv, nv);
    shifted_.resize(g.bonds().size());
  }

  int dimension() const { return graph_->bond_count(); }

  double operator()(std::span<const double> theta) const {
    double gap = 2.0;
    const auto& bonds = graph_->bonds();
    for (std::size_t b = 0; b < bonds.size(); ++b) {
      gap = std::min(gap, detail::pole_gap(bonds[b].is_loop(), theta[b]));
    }
    if (gap >= kGuard) return raw(theta);
    // Shift every phase within the guard band by the same offset and combine
    // f(0) ~= [4 (f(h) + f(-h)) - (f(2h) + f(-2h))] / 6, exact through cubics.
    double node[4];
    static constexpr double kOffsets[4] = {kShift, -kShift, 2.0 * kShift, -2.0 * kShift};
    for (int n = 0; n < 4; ++n) {
      for (std::size_t b = 0; b < bonds.size(); ++b) {
        const double g0 = detail::pole_gap(bonds[b].is_loop(), theta[b]);
        shifted_[b] = g0 < kGuard ? theta[b] + kOffsets[n] : theta[b];
      }
      node[n] = raw(shifted_);
    }
    return (4.0 * (node[0] + node[1]) - (node[2] + node[3])) / 6.0;
  }

 private:
  double raw(std::span<const double> theta) const {
    h_.setZero();
    double prod = 1.0;
    const auto& bonds = graph_->bonds();
    for (std::size_t i = 0; i < bonds.size(); ++i) {
      const Bond& b = bonds[i];
      const double s = std::sin(theta[i]);
      prod *= s;
      if (b.is_loop()) {
        h_(b.u, b.u) += 2.0 * std::tan(0.5 * theta[i]);
      } else {
        const double c = std::cos(theta[i]);
        h_(b.u, b.u) -= c / s;
        h_(b.v, b.v) -= c / s;
        h_(b.u, b.v) += 1.0 / s;
        h_(b.v, b.u) += 1.0 / s;
      }
    }
    if (h_.rows() == 1) return h_(0, 0) * prod;
    return h_.determinant() * prod;
  }

  static constexpr double kGuard = 1e-5;
  static constexpr double kShift = 5e-4;

  const MetricGraph* graph_;
  mutable Eigen::MatrixXd h_;
  mutable std::vector<double> shifted_;
};

// ====================== scalar secular function of k ========================

enum class SecularVariant { regularized_det_h, abs_det_I_minus_S };

// Unitary-route evaluations. det(I - S(k)) rotated by e^{-i k L} and by the
// constant branch of det T is real (or purely imaginary when det T < 0) with
// transversal sign changes exactly at the spectrum, including at eigenvalues
// that coincide with sin poles. Used for cross-checks against the det-h
// route and for the smallest-singular-value spurious-zero filter.
class UnitarySecular {
 public:
  explicit UnitarySecular(const MetricGraph& g) : graph_(&g) {
    transition_ = vertex_transition(g);
    det_t_ = transition_.determinant();
    total_length_ = g.total_length();
    const int nd = 2 * g.bond_count();
    s_.resize(nd, nd);
    work_.resize(nd, nd);
  }

  std::complex<double> det_i_minus_s(double k) const {
    build(k);
    work_ = Eigen::MatrixXcd::Identity(s_.rows(), s_.cols()) - s_;
    return work_.determinant();
  }

  double abs_value(double k) const { return std::abs(det_i_minus_s(k)); }

  // Sign-carrying real form: Re or Im of e^{-ikL} det(I - S) by sign(det T).
  double signed_value(double k) const {
    const std::complex<double> z =
        std::polar(1.0, -k * total_length_) * det_i_minus_s(k);
    return det_t_ > 0.0 ? z.real() : z.imag();
  }

  double smallest_singular(double k) const {
    build(k);
    work_ = Eigen::MatrixXcd::Identity(s_.rows(), s_.cols()) - s_;
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(work_);
    return svd.singularValues()(svd.singularValues().size() - 1);
  }

  // Sum of the eigenphases of S(k), each taken in [0, 2 pi). Every eigenphase
  // moves strictly upward in k (its velocity is a length average, between the
  // shortest and the longest bond), and their unwrapped sum is arg det S(k) =
  // 2 L k + const exactly. A level is an eigenphase crossing of 0 mod 2 pi,
  // where the wrapped phase drops by 2 pi, so for any k1 < k2
  //
  //   #levels in (k1, k2] =
  //       (2 L (k2 - k1) - (eigenphase_sum(k2) - eigenphase_sum(k1))) / (2 pi)
  //
  // is an exact integer up to eigensolver rounding. This counts levels with
  // their multiplicity and is immune to clustering, which makes it the audit
  // oracle for the sign-scan solver.
  double eigenphase_sum(double k) const {
    build(k);
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(s_, /*computeEigenvectors=*/false);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      double ph = std::arg(es.eigenvalues()(i));
      if (ph < 0.0) ph += 2.0 * std::numbers::pi;
      sum += ph;
    }
    return sum;
  }

  double total_length() const { return total_length_; }

  double det_transition() const { return det_t_; }

 private:
  void build(double k) const {
    const int nd = 2 * graph_->bond_count();
    for (int d = 0; d < nd; ++d) {
      const double l = graph_->bonds()[static_cast<std::size_t>(d / 2)].length;
      const std::complex<double> phase = std::polar(1.0, k * l);
      s_.row(d) = phase * transition_.row(d).cast<std::complex<double>>();
    }
  }

  const MetricGraph* graph_;
  Eigen::MatrixXd transition_;
  double det_t_ = 1.0;
  double total_length_ = 0.0;
  mutable Eigen::MatrixXcd s_;
  mutable Eigen::MatrixXcd work_;
};

// Scalar secular function f(k) under a selectable formulation. The
// regularized det-h variant changes sign across every simple eigenvalue and
// is the scanning function; its extra zeros (when a zero of f sits on a sin
// pole without being an eigenvalue) are rejected downstream by the
// smallest-singular-value test on I - S(k). The abs variant is nonnegative
// with dips to zero exactly at the spectrum.
class SecularFunction {
 public:
  SecularFunction(const MetricGraph& g, SecularVariant variant)
      : variant_(variant), phase_(g), unitary_(g) {
    for (const Bond& b : g.bonds()) lengths_.push_back(b.length);
    theta_.resize(lengths_.size());
  }

  SecularVariant variant() const { return variant_; }

  double operator()(double k) const {
    if (variant_ == SecularVariant::regularized_det_h) {
      for (std::size_t b = 0; b < lengths_.size(); ++b) theta_[b] = k * lengths_[b];
      return phase_(theta_);
    }
    return unitary_.abs_value(k);
  }

 private:
  SecularVariant variant_;
  PhaseSecular phase_;
  UnitarySecular unitary_;
  std::vector<double> lengths_;
  mutable std::vector<double> theta_;
};

// Convenience: one-off evaluation of the regularized determinant form.
inline double secular_value(const MetricGraph& g, double k) {
  SecularFunction f(g, SecularVariant::regularized_det_h);
  return f(k);
}

}  // namespace qgraph
