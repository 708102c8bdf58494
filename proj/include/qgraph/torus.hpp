#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qgraph/errors.hpp"
#include "qgraph/metric_graph.hpp"
#include "qgraph/rng.hpp"
#include "qgraph/scan.hpp"
#include "qgraph/secular.hpp"
#include "qgraph/spacing.hpp"

namespace qgraph {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Linear flow x(t) = x0 + t * frequencies on the n-torus. Counting
// conventions (sheet counts, sum rule) always use period 2*pi per
// coordinate; finer symmetries of the surface are kept as metadata.
struct TorusFlow {
  std::vector<double> frequencies;
  std::vector<double> periods;

  int dimension() const { return static_cast<int>(frequencies.size()); }
};

struct CoordinateSymmetry {
  bool anti_periodic = false;  // F(x + period e_i) = -F(x)
  double period = kTwoPi;      // smallest detected period or anti-period
};

// Secular determinant as a function on the torus of basis phases:
// F(x) = f(theta) with theta_b = sum_i c_{b,i} x_i and integer c. The basis
// is rescaled so every coefficient is an integer, which makes F 2*pi
// periodic in each coordinate; f(k) = F(k * frequencies) by construction.
class SurfaceFunction {
 public:
  SurfaceFunction(const MetricGraph& g, const LengthBasis& basis)
      : phase_(g), total_length_(g.total_length()) {
    const BasisReport report = validate(g, basis);
    if (!report.ok)
      throw InvalidInput("length basis failed validation for this graph");
    const auto n = static_cast<std::size_t>(basis.dimension());
    const auto nb = g.bonds().size();

    // Integerize: divide basis entry i by the lcm of the denominators of the
    // coefficients that use it.
    std::vector<long long> scale(n, 1);
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t i = 0; i < n; ++i) {
        const Rational& c = basis.coefficients[b][i];
        if (c.num != 0) scale[i] = std::lcm(scale[i], c.den);
      }
    frequencies_.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      frequencies_[i] = basis.lengths[i] / static_cast<double>(scale[i]);
    coefficients_.assign(nb, std::vector<long long>(n, 0));
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t i = 0; i < n; ++i) {
        const Rational& c = basis.coefficients[b][i];
        if (c.num != 0) coefficients_[b][i] = c.num * (scale[i] / c.den);
      }
    theta_.resize(nb);
    detect_symmetry();
  }

  int dimension() const { return static_cast<int>(frequencies_.size()); }
  double total_length() const { return total_length_; }
  const std::vector<double>& frequencies() const { return frequencies_; }
  const std::vector<std::vector<long long>>& coefficients() const { return coefficients_; }
  const std::vector<CoordinateSymmetry>& symmetry() const { return symmetry_; }

  double operator()(std::span<const double> x) const {
    for (std::size_t b = 0; b < coefficients_.size(); ++b) {
      double th = 0.0;
      for (std::size_t i = 0; i < frequencies_.size(); ++i)
        th += static_cast<double>(coefficients_[b][i]) * x[i];
      theta_[b] = th;
    }
    return phase_(theta_);
  }

  TorusFlow flow() const {
    TorusFlow f;
    f.frequencies = frequencies_;
    f.periods.assign(frequencies_.size(), kTwoPi);
    return f;
  }

 private:
  void detect_symmetry() {
    const auto n = frequencies_.size();
    symmetry_.assign(n, CoordinateSymmetry{});
    UniformRng rng(0x5eedf00dULL);
    std::vector<std::vector<double>> probes(16, std::vector<double>(n));
    double scale = 0.0;
    for (auto& p : probes) {
      for (auto& c : p) c = rng.in(0.0, kTwoPi);
      scale = std::max(scale, std::abs((*this)(p)));
    }
    if (scale == 0.0) scale = 1.0;
    std::vector<double> shifted(n);
    for (std::size_t i = 0; i < n; ++i) {
      double anti = 0.0, plain = 0.0;
      for (const auto& p : probes) {
        shifted = p;
        shifted[i] += std::numbers::pi;
        const double f0 = (*this)(p);
        const double f1 = (*this)(shifted);
        anti = std::max(anti, std::abs(f1 + f0));
        plain = std::max(plain, std::abs(f1 - f0));
      }
      if (anti < 1e-10 * scale)
        symmetry_[i] = {true, std::numbers::pi};
      else if (plain < 1e-10 * scale)
        symmetry_[i] = {false, std::numbers::pi};
      else
        symmetry_[i] = {false, kTwoPi};
    }
  }

  PhaseSecular phase_;
  double total_length_ = 0.0;
  std::vector<double> frequencies_;
  std::vector<std::vector<long long>> coefficients_;
  std::vector<CoordinateSymmetry> symmetry_;
  mutable std::vector<double> theta_;
};

inline std::pair<TorusFlow, SurfaceFunction> secular_surface(const MetricGraph& g,
                                                             const LengthBasis& basis) {
  SurfaceFunction f(g, basis);
  return {f.flow(), std::move(f)};
}

// ============================== sheet counting ==============================

// Zeros of F along one full 2*pi sweep of coordinate i with the remaining
// coordinates frozen at random values; the majority count over the probes.
// Sweeps always cover 2*pi regardless of finer anti-periods: that is the
// convention under which sum_i m_i l_i = 2 L_tot holds.
inline int sheet_count(const SurfaceFunction& f, std::size_t direction,
                       int probes = 16, std::uint64_t seed = 0x5f3759dfULL,
                       std::size_t nodes = 1024) {
  const auto n = static_cast<std::size_t>(f.dimension());
  if (direction >= n) throw InvalidInput("sheet_count direction out of range");
  if (probes < 16) throw InvalidInput("sheet_count requires at least 16 probes");
  UniformRng rng(seed);
  std::map<int, int> votes;
  std::vector<double> x(n);
  for (int p = 0; p < probes; ++p) {
    for (auto& c : x) c = rng.in(0.0, kTwoPi);
    const double base = x[direction];
    std::vector<int> signs(nodes);
    for (std::size_t j = 0; j < nodes; ++j) {
      x[direction] = base + kTwoPi * static_cast<double>(j) / static_cast<double>(nodes);
      signs[j] = sign_of(f(x));
    }
    x[direction] = base;
    int crossings = 0;
    int prev = 0;
    // Walk the closed loop starting from the first nonzero sign.
    std::size_t start = 0;
    while (start < nodes && signs[start] == 0) ++start;
    if (start == nodes) continue;  // identically zero along the sweep: no vote
    prev = signs[start];
    for (std::size_t step = 1; step <= nodes; ++step) {
      const int s = signs[(start + step) % nodes];
      if (s == 0) {
        ++crossings;  // zero node: one zero, consumes the crossing
        prev = 0;
      } else {
        if (prev != 0 && s != prev) ++crossings;
        prev = s;
      }
    }
    ++votes[crossings];
  }
  int best = -1, best_count = 0;
  for (const auto& [value, count] : votes)
    if (count > best_count) {
      best = value;
      best_count = count;
    }
  if (best < 0 || 2 * best_count <= probes)
    throw SheetAmbiguity("sheet count votes split without a majority (tangency suspected)");
  return best;
}

struct SumRuleReport {
  std::vector<int> sheets;
  std::vector<double> frequencies;
  double lhs = 0.0;  // sum_i m_i * l_i
  double rhs = 0.0;  // 2 * total length
};

inline SumRuleReport verify_sum_rule(const MetricGraph& g, const LengthBasis& basis,
                                     int probes = 16,
                                     std::uint64_t seed = 0x5f3759dfULL) {
  SurfaceFunction f(g, basis);
  SumRuleReport report;
  report.frequencies = f.frequencies();
  for (std::size_t i = 0; i < report.frequencies.size(); ++i)
    report.sheets.push_back(sheet_count(f, i, probes, seed + i));
  report.lhs = 0.0;
  for (std::size_t i = 0; i < report.sheets.size(); ++i)
    report.lhs += report.sheets[i] * report.frequencies[i];
  report.rhs = 2.0 * g.total_length();
  if (std::abs(report.lhs - report.rhs) > 1e-9 * report.rhs)
    throw SumRuleMismatch("sheet counts violate the density sum rule", report.lhs,
                          report.rhs);
  return report;
}

// ============================ first-return sampling =========================

namespace detail {

// Ordered zero crossings of g over the grid t_j = t_start + j*step, robust
// against clustered roots. Near a crossing point of several branches of
// {F = 0} a trajectory cuts all the sheets in quick succession; a bare sign
// scan then reports one crossing for an odd cluster and none for an even
// one. Two defenses: a same-sign dip of the sampled magnitude is probed with
// the interpolating parabola through the last three nodes, and every
// interval that shows structure (a sign change or a confirmed dip) is
// rescanned once at 16x resolution. emit(t) returns false to stop the walk.
template <class G, class Emit>
class CrossingWalk {
 public:
  CrossingWalk(G& g, double rel_tol, Emit& emit) : g_(g), rel_tol_(rel_tol), emit_(emit) {}

  // Returns false when the consumer stopped the walk.
  bool run(double t_start, std::size_t node_count, double step) {
    if (node_count < 2) return true;
    const double tb = t_start + static_cast<double>(node_count - 1) * step;
    return segment(t_start, g_(t_start), tb, g_(tb), node_count - 1, kDepth);
  }

 private:
  // Two refinement levels: structure found at one level is rescanned 16x
  // finer, so clusters wider than step/256 are resolved. The figure-eight
  // corner, where three branches meet, needs the second level.
  static constexpr int kDepth = 2;

  double xtol(double t) const { return rel_tol_ * std::max(1.0, t); }

  // Overlapping refinement windows can re-find a root from a different
  // bracket, shifted by up to the bisection tolerance; crossings that close
  // together are numerically one crossing.
  bool send(double r) {
    if (r <= last_ + 4.0 * xtol(r)) return true;
    last_ = r;
    return emit_(r);
  }

  bool pin_down(double ta, double ga, double tb, double gb, std::size_t segments,
                int depth) {
    if (depth > 0) return segment(ta, ga, tb, gb, segments, depth - 1);
    return send(bisect_root(g_, ta, tb, ga, gb, xtol(tb)));
  }

  // Uniform sign walk of [ta, tb] with endpoint values known. Plain sign
  // changes recurse (widened by the preceding interval, where an even
  // cluster can hide next to an odd one); the interval right after a
  // crossing gets the same treatment; same-sign magnitude dips are probed
  // via probe_dip. At depth 0 a sign change is just bisected.
  bool segment(double ta, double ga, double tb, double gb, std::size_t segments,
               int depth) {
    const double h = (tb - ta) / static_cast<double>(segments);
    double t0 = 0.0, g0 = 0.0;
    bool have0 = false;
    double t1 = ta, g1 = ga;
    int s_ref = sign_of(ga);
    bool flank = false;
    for (std::size_t j = 1; j <= segments; ++j) {
      const double t2 = (j == segments) ? tb : ta + h * static_cast<double>(j);
      const double g2 = (j == segments) ? gb : g_(t2);
      const int s2 = sign_of(g2);
      if (s2 == 0) {
        if (!send(t2)) return false;
        s_ref = 0;  // consumed; the next nonzero sample resets the reference
        flank = false;
      } else if (s_ref == 0) {
        s_ref = s2;
        flank = false;
      } else if (s2 != s_ref) {
        const bool ok = have0 && depth > 0 ? pin_down(t0, g0, t2, g2, 32, depth)
                                           : pin_down(t1, g1, t2, g2, 16, depth);
        if (!ok) return false;
        s_ref = s2;
        flank = (depth > 0);
      } else if (flank) {
        if (!segment(t1, g1, t2, g2, 16, depth - 1)) return false;
        flank = false;
      } else if (have0 && sign_of(g0) == s_ref && std::abs(g1) <= std::abs(g0) &&
                 std::abs(g1) < std::abs(g2)) {
        if (!probe_dip(t0, g0, t1, g1, t2, g2, s_ref, h, depth)) return false;
      }
      t0 = t1;
      g0 = g1;
      have0 = (s_ref != 0);
      t1 = t2;
      g1 = g2;
    }
    return true;
  }

  // Same-sign dip across three equally spaced samples: probe the vertex of
  // the interpolating parabola for a hidden pair of roots. The vertex is a
  // crude estimator for asymmetric dips, so when it does not confirm, the
  // whole dip interval is rescanned one level finer.
  bool probe_dip(double t0, double g0, double t1, double g1, double t2, double g2,
                 int s_ref, double step, int depth) {
    const double curv = g0 - 2.0 * g1 + g2;  // 2 h^2 * curvature
    if (curv * static_cast<double>(s_ref) > 0.0) {
      const double off = -0.5 * step * (g2 - g0) / curv;  // vertex offset from t1
      if (std::abs(off) < step) {
        const double tv = t1 + off;
        const double gv = g_(tv);
        const int sv = sign_of(gv);
        if (sv == 0) return send(tv);  // tangential touch: a double crossing
        if (sv != s_ref) {
          if (!pin_down(t0, g0, tv, gv, 16, depth)) return false;
          return pin_down(tv, gv, t2, g2, 16, depth);
        }
      }
    }
    return depth > 0 ? segment(t0, g0, t2, g2, 32, depth - 1) : true;
  }

  G& g_;
  double rel_tol_;
  Emit& emit_;
  double last_ = -std::numeric_limits<double>::infinity();
};

template <class G, class Emit>
void collect_crossings(G&& g, double t_start, std::size_t node_count, double step,
                       double rel_tol, Emit&& emit) {
  CrossingWalk<std::remove_reference_t<G>, std::remove_reference_t<Emit>> walk(g, rel_tol,
                                                                               emit);
  walk.run(t_start, node_count, step);
}

}  // namespace detail

struct ReturnSettings {
  double oversample = 8.0;        // scan nodes per expected crossing
  double refine_rel_tol = 1e-12;  // bisection width relative to elapsed time
  double audit_rel = 0.005;       // crossing-rate audit
  double audit_abs = 2.0;
  double pilot_crossings = 64.0;  // crossings used for the rate re-estimate
};

struct ReturnSample {
  std::vector<double> taus;   // successive crossing-time differences
  std::vector<double> start;  // xi_0
  std::size_t crossings = 0;
};

// Successive crossings of F = 0 along the flow from xi_0: sign scan of
// t -> F(xi_0 + t v) with a pilot-calibrated step, bisection refinement.
// For a secular surface the expected crossing rate is the mean level
// density, audited at the end.
inline ReturnSample first_returns(const TorusFlow& flow, const SurfaceFunction& f,
                                  std::vector<double> xi0, std::size_t count,
                                  const ReturnSettings& settings = {}) {
  const auto n = static_cast<std::size_t>(flow.dimension());
  if (xi0.size() != n) throw InvalidInput("first_returns start point has wrong dimension");
  if (count < 1) throw InvalidInput("first_returns requires count >= 1");

  const double rate0 = f.total_length() / std::numbers::pi;
  std::vector<double> pos(n);
  auto g = [&](double t) {
    for (std::size_t i = 0; i < n; ++i) pos[i] = xi0[i] + t * flow.frequencies[i];
    return f(pos);
  };

  // Pilot: re-estimate the crossing rate from the first few crossings, then
  // rescan with the calibrated step so the oversampling target holds even if
  // the analytic rate guess is off.
  double rate = rate0;
  {
    const double t_pilot = settings.pilot_crossings / rate0;
    const double step = 1.0 / (rate0 * settings.oversample);
    const auto nodes = static_cast<std::size_t>(std::ceil(t_pilot / step)) + 1;
    std::size_t found = 0;
    detail::collect_crossings(g, 0.0, nodes, step, settings.refine_rel_tol,
                              [&](double) {
                                ++found;
                                return true;
                              });
    if (found >= 8) rate = std::max(rate0, static_cast<double>(found) / t_pilot);
  }

  const double step = 1.0 / (rate * settings.oversample);
  std::vector<double> crossings;
  double t_lo = 0.0;
  const double window = (static_cast<double>(count) + 16.0) / rate;
  for (int extension = 0; extension < 64 && crossings.size() < count + 1; ++extension) {
    const auto nodes = static_cast<std::size_t>(std::ceil(window / step)) + 1;
    detail::collect_crossings(g, t_lo, nodes, step, settings.refine_rel_tol,
                              [&](double r) {
                                if (r > t_lo &&
                                    (crossings.empty() || r > crossings.back()))
                                  crossings.push_back(r);
                                return crossings.size() < count + 1;
                              });
    t_lo += static_cast<double>(nodes - 1) * step;
  }
  if (crossings.size() < count + 1)
    throw MissingLevels("first_returns could not collect the requested crossings", 0.0,
                        t_lo, static_cast<double>(count + 1), crossings.size());

  ReturnSample out;
  out.start = std::move(xi0);
  out.crossings = crossings.size();
  out.taus.reserve(count);
  for (std::size_t j = 0; j + 1 < crossings.size() && out.taus.size() < count; ++j)
    out.taus.push_back(crossings[j + 1] - crossings[j]);

  const double elapsed = crossings.back() - crossings.front();
  const double expected = rate0 * elapsed;
  const double found = static_cast<double>(out.taus.size());
  const double bound = std::max(settings.audit_abs, settings.audit_rel * expected);
  if (std::abs(found - expected) > bound)
    throw MissingLevels("first_returns crossing rate deviates from the mean density",
                        crossings.front(), crossings.back(), expected, out.taus.size());
  return out;
}

// Ergodic sampler: concatenates first_returns over trajectories started at
// seeded uniform random points; unfolds by the analytic mean density.
inline SpacingSeries sample_return_spacings(const TorusFlow& flow, const SurfaceFunction& f,
                                            std::size_t total, std::uint64_t seed,
                                            std::size_t per_trajectory = 4096,
                                            const ReturnSettings& settings = {}) {
  if (total == 0) throw InvalidInput("sample_return_spacings requires total >= 1");
  UniformRng rng(seed);
  const auto n = static_cast<std::size_t>(flow.dimension());
  SpacingSeries out;
  out.deltas.reserve(total);
  const double density = f.total_length() / std::numbers::pi;
  while (out.deltas.size() < total) {
    std::vector<double> xi0(n);
    for (auto& c : xi0) c = rng.in(0.0, kTwoPi);
    const auto want = std::min(per_trajectory, total - out.deltas.size());
    ReturnSample sample = first_returns(flow, f, std::move(xi0), want, settings);
    for (double tau : sample.taus) {
      const double d = density * tau;
      if (d < kTinySpacing) ++out.flagged_tiny;
      out.deltas.push_back(d);
    }
  }
  return out;
}

// ========================= 2D section quadrature ============================

struct QuadratureSettings {
  std::size_t grid_size = 2048;    // coarse seeding grid per coordinate
  double step_factor = 0.75;       // trace step as a fraction of a cell
  double corrector_tol = 1e-11;    // |F| <= tol * grid scale after correction
  double gradient_floor = 1e-7;    // |grad|*cell below floor*scale is singular
  int max_corrector_iters = 12;
  double histogram_bin = 0.02;     // density evaluator bin for the result
  double return_oversample = 8.0;  // scan density for the midpoint return times
};

struct QuadratureResult {
  SpacingDistribution distribution;
  std::vector<std::pair<double, double>> atoms;  // (delta, weight), sorted
  double flux_density = 0.0;   // total weight / (2 pi)^2; equals L/pi for
                               // secular surfaces up to discretization
  double min_return_delta = 0.0;
  std::size_t segment_count = 0;
  std::size_t branch_count = 0;
};

namespace detail {

inline double wrap_unit(double x) {
  double r = std::fmod(x, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  return r;
}

inline double wrap_signed(double d) {
  double r = std::fmod(d, kTwoPi);
  if (r < -std::numbers::pi) r += kTwoPi;
  if (r >= std::numbers::pi) r -= kTwoPi;
  return r;
}

struct Trace2D {
  const SurfaceFunction& f;
  const std::vector<double>& vel;  // flow frequencies (l1, l2)
  const QuadratureSettings& st;
  double scale = 1.0;  // max |F| over the coarse grid
  double cell = 0.0;   // coarse cell width
  double step = 0.0;   // trace step
  std::vector<char>& visited;
  std::size_t grid = 0;

  double eval(double x, double y) const {
    const double p[2] = {x, y};
    return f(std::span<const double>(p, 2));
  }

  void gradient(double x, double y, double& gx, double& gy) const {
    const double h = 1e-6;
    gx = (eval(x + h, y) - eval(x - h, y)) / (2.0 * h);
    gy = (eval(x, y + h) - eval(x, y - h)) / (2.0 * h);
  }

  // Marks the 3x3 block around the containing cell: a step of 0.75 cells can
  // clip a neighboring cell without placing a vertex in it, and a clipped
  // cell left unvisited would reseed (and double-count) the same branch.
  void mark(double x, double y) const {
    const auto a = static_cast<std::size_t>(wrap_unit(x) / cell) % grid;
    const auto b = static_cast<std::size_t>(wrap_unit(y) / cell) % grid;
    for (std::size_t da = grid - 1; da <= grid + 1; ++da)
      for (std::size_t db = grid - 1; db <= grid + 1; ++db)
        visited[((a + da) % grid) * grid + (b + db) % grid] = 1;
  }

  // Newton steps along the gradient direction toward F = 0. Returns false
  // when the point sits in a singular region (tiny gradient) or fails to
  // converge inside the cell.
  bool project(double& x, double& y) const {
    for (int it = 0; it < st.max_corrector_iters; ++it) {
      const double fv = eval(x, y);
      if (std::abs(fv) <= st.corrector_tol * scale) return true;
      double gx, gy;
      gradient(x, y, gx, gy);
      const double g2 = gx * gx + gy * gy;
      if (g2 * cell * cell < st.gradient_floor * st.gradient_floor * scale * scale)
        return false;
      const double dx = -fv * gx / g2;
      const double dy = -fv * gy / g2;
      if (std::hypot(dx, dy) > 0.75 * cell) return false;
      x += dx;
      y += dy;
    }
    return std::abs(eval(x, y)) <= 10.0 * st.corrector_tol * scale;
  }

  // March from (x0, y0) with initial tangent orientation sgn; collects
  // vertices (excluding the seed itself). Returns true if the branch closed
  // onto the seed, false if it terminated at a singular point. A sharp turn
  // of the tangent means the corrector hopped onto a different branch across
  // a crossing point; continuing would re-trace (and double-count) it, so
  // that also terminates the march. When the opposite leg of the same seed
  // already terminated somewhere (meet point), the march also stops on
  // reaching that point: the branch is a loop interrupted by a singular
  // landing, and marching past the meet would re-trace the other leg's arc.
  bool march(double x0, double y0, int sgn, std::vector<std::pair<double, double>>& verts,
             bool have_meet = false, double meet_x = 0.0, double meet_y = 0.0) const {
    double x = x0, y = y0;
    double tx0 = 0.0, ty0 = 0.0;
    bool have_dir = false;
    const std::size_t cap = 64 * grid;
    for (std::size_t it = 0; it < cap; ++it) {
      double gx, gy;
      gradient(x, y, gx, gy);
      const double gn = std::hypot(gx, gy);
      if (gn * cell < st.gradient_floor * scale) return false;
      double tx = -gy / gn, ty = gx / gn;
      if (!have_dir) {
        tx *= sgn;
        ty *= sgn;
        have_dir = true;
      } else {
        const double along = tx * tx0 + ty * ty0;
        if (std::abs(along) < 0.5) return false;  // branch switch at a crossing
        if (along < 0.0) {
          tx = -tx;
          ty = -ty;
        }
      }
      tx0 = tx;
      ty0 = ty;
      double nx = x + step * tx;
      double ny = y + step * ty;
      if (!project(nx, ny)) return false;
      // Closure: back at the seed after a real excursion.
      const double ddx = wrap_signed(nx - x0);
      const double ddy = wrap_signed(ny - y0);
      if (it >= 3 && std::hypot(ddx, ddy) < 0.6 * step) {
        verts.emplace_back(x0, y0);
        return true;
      }
      // No minimum-excursion gate here: the opposite leg's terminal can sit
      // within a couple of steps of the seed (a seed placed just past a
      // saddle), and marching over it still re-traces the other leg's arc.
      if (have_meet &&
          std::hypot(wrap_signed(nx - meet_x), wrap_signed(ny - meet_y)) < 0.6 * step)
        return false;
      verts.emplace_back(nx, ny);
      mark(nx, ny);
      x = nx;
      y = ny;
    }
    throw ContinuationFailure("branch tracing exceeded the step budget near (" +
                              std::to_string(wrap_unit(x)) + ", " +
                              std::to_string(wrap_unit(y)) + ")");
  }
};

}  // namespace detail

// Direct quadrature of the return-time distribution over a 2D section:
// traces every branch of {F = 0}, weights each polyline segment by the flux
// |l1 dy - l2 dx| it intercepts, computes the first return time from the
// projected segment midpoint, and accumulates a weighted distribution of
// Delta = flux_density * tau. The distribution carries the exact weighted
// CDF; the density evaluator bins atoms at histogram_bin.
inline QuadratureResult quadrature_spacing_2d(const TorusFlow& flow,
                                              const SurfaceFunction& f,
                                              const QuadratureSettings& settings = {}) {
  if (flow.dimension() != 2 || f.dimension() != 2)
    throw UnsupportedVariant("section quadrature is implemented for 2-tori only");
  const std::size_t grid = settings.grid_size;
  if (grid < 64) throw InvalidInput("quadrature grid_size must be at least 64");
  const double cell = kTwoPi / static_cast<double>(grid);

  // Coarse field for seeding and the function scale.
  std::vector<double> field(grid * grid);
  double scale = 0.0;
  {
    std::vector<double> x(2);
    for (std::size_t a = 0; a < grid; ++a) {
      x[0] = static_cast<double>(a) * cell;
      for (std::size_t b = 0; b < grid; ++b) {
        x[1] = static_cast<double>(b) * cell;
        const double v = f(x);
        field[a * grid + b] = v;
        scale = std::max(scale, std::abs(v));
      }
    }
  }
  if (scale == 0.0)
    throw ContinuationFailure("surface function vanishes on the whole seeding grid");

  std::vector<char> visited(grid * grid, 0);
  detail::Trace2D tracer{f, flow.frequencies, settings, scale, cell,
                         settings.step_factor * cell, visited, grid};

  QuadratureResult result;
  std::vector<std::pair<double, double>> polyline;
  std::vector<std::pair<double, double>> back;

  const double l1 = flow.frequencies[0];
  const double l2 = flow.frequencies[1];
  const double rate0 = f.total_length() / std::numbers::pi;
  const double tau_step = 1.0 / (rate0 * settings.return_oversample);
  std::vector<double> pos(2);

  auto first_return = [&](double mx, double my) -> double {
    auto g = [&](double t) {
      pos[0] = mx + t * l1;
      pos[1] = my + t * l2;
      return f(pos);
    };
    // Reference sign just off the surface; widen if the probe sits too close.
    double t_eps = tracer.step * 1e-6;
    int s0 = 0;
    for (int widen = 0; widen < 40 && s0 == 0; ++widen) {
      s0 = sign_of(g(t_eps));
      if (s0 == 0) t_eps *= 2.0;
    }
    if (s0 == 0)
      throw ContinuationFailure("return probe could not leave the surface");
    double hit = -1.0;
    auto catch_first = [&](double r) {
      hit = r;
      return false;
    };
    // Fine pre-scan of the first coarse interval: a probe point near a
    // crossing of two branches meets the other branch (and crosses back)
    // within a fraction of the coarse step.
    detail::collect_crossings(g, t_eps, 17, tau_step / 16.0, 1e-13, catch_first);
    if (hit < 0.0)
      detail::collect_crossings(g, tau_step, 4096 * settings.return_oversample,
                                tau_step, 1e-13, catch_first);
    if (hit < 0.0)
      throw ContinuationFailure("first return not found within the scan budget");
    return hit;
  };

  std::vector<std::pair<double, double>> atoms;  // (tau, weight)
  double total_weight = 0.0;
  double min_tau = std::numeric_limits<double>::infinity();

  auto process_segment = [&](double ax, double ay, double bx, double by) {
    const double dx = detail::wrap_signed(bx - ax);
    const double dy = detail::wrap_signed(by - ay);
    const double w = std::abs(l1 * dy - l2 * dx);
    if (w <= 0.0) return;
    double mx = ax + 0.5 * dx;
    double my = ay + 0.5 * dy;
    if (!tracer.project(mx, my)) return;  // midpoint fell on a singular spot
    const double tau = first_return(mx, my);
    atoms.emplace_back(tau, w);
    total_weight += w;
    min_tau = std::min(min_tau, tau);
  };

  for (std::size_t a = 0; a < grid; ++a) {
    for (std::size_t b = 0; b < grid; ++b) {
      if (visited[a * grid + b]) continue;
      const double f00 = field[a * grid + b];
      const double f10 = field[((a + 1) % grid) * grid + b];
      const double f01 = field[a * grid + (b + 1) % grid];
      const int s00 = sign_of(f00), s10 = sign_of(f10), s01 = sign_of(f01);
      double sx = 0.0, sy = 0.0;
      bool seeded = false;
      if (s00 == 0) {
        sx = static_cast<double>(a) * cell;
        sy = static_cast<double>(b) * cell;
        seeded = true;
      } else if (s10 != 0 && s10 != s00) {
        const double x0 = static_cast<double>(a) * cell;
        const double y0 = static_cast<double>(b) * cell;
        sx = bisect_root([&](double t) { return tracer.eval(t, y0); }, x0, x0 + cell,
                         f00, f10, 1e-12);
        sy = y0;
        seeded = true;
      } else if (s01 != 0 && s01 != s00) {
        const double x0 = static_cast<double>(a) * cell;
        const double y0 = static_cast<double>(b) * cell;
        sx = x0;
        sy = bisect_root([&](double t) { return tracer.eval(x0, t); }, y0, y0 + cell,
                         f00, f01, 1e-12);
        seeded = true;
      }
      if (!seeded) continue;
      double px = sx, py = sy;
      if (!tracer.project(px, py)) continue;  // seed sits in a singular region
      tracer.mark(px, py);

      polyline.clear();
      back.clear();
      const bool closed = tracer.march(px, py, +1, polyline);
      if (!closed) {
        bool closed_back = false;
        if (polyline.empty())
          closed_back = tracer.march(px, py, -1, back);
        else
          closed_back = tracer.march(px, py, -1, back, true, polyline.back().first,
                                     polyline.back().second);
        if (closed_back) {
          // The reverse leg went the whole way around; the forward leg is a
          // sub-arc of the same loop and would be double-counted.
          polyline.assign(back.begin(), back.end());
          polyline.insert(polyline.begin(), {px, py});
        } else {
          std::reverse(back.begin(), back.end());
          back.emplace_back(px, py);
          back.insert(back.end(), polyline.begin(), polyline.end());
          polyline.swap(back);
        }
      } else {
        polyline.insert(polyline.begin(), {px, py});
      }
      if (polyline.size() < 2) continue;
      ++result.branch_count;
      for (std::size_t j = 0; j + 1 < polyline.size(); ++j)
        process_segment(polyline[j].first, polyline[j].second, polyline[j + 1].first,
                        polyline[j + 1].second);
    }
  }

  if (atoms.empty())
    throw ContinuationFailure("section quadrature produced no weighted segments");

  result.segment_count = atoms.size();
  result.flux_density = total_weight / (kTwoPi * kTwoPi);

  // Scale return times to unit mean spacing by the exact mean density; the
  // discretized flux stays available as an audit of the traced coverage.
  const double density = rate0;
  result.atoms.reserve(atoms.size());
  for (const auto& [tau, w] : atoms) result.atoms.emplace_back(density * tau, w);
  std::sort(result.atoms.begin(), result.atoms.end());
  result.min_return_delta = density * min_tau;

  // Weighted exact CDF + binned density evaluator.
  auto xs = std::make_shared<std::vector<double>>();
  auto cum = std::make_shared<std::vector<double>>();
  xs->reserve(result.atoms.size());
  cum->reserve(result.atoms.size());
  double acc = 0.0;
  for (const auto& [d, w] : result.atoms) {
    acc += w / total_weight;
    if (!xs->empty() && xs->back() == d) {
      cum->back() = acc;
    } else {
      xs->push_back(d);
      cum->push_back(acc);
    }
  }
  SpacingDistribution dist;
  dist.cdf = [xs, cum](double x) {
    const auto it = std::upper_bound(xs->begin(), xs->end(), x);
    if (it == xs->begin()) return 0.0;
    return (*cum)[static_cast<std::size_t>(it - xs->begin()) - 1];
  };
  dist.cdf_left = [xs, cum](double x) {
    const auto it = std::lower_bound(xs->begin(), xs->end(), x);
    if (it == xs->begin()) return 0.0;
    return (*cum)[static_cast<std::size_t>(it - xs->begin()) - 1];
  };
  const double bin = settings.histogram_bin;
  const double top = xs->back();
  const auto nbins = static_cast<std::size_t>(std::floor(top / bin)) + 1;
  auto hist = std::make_shared<std::vector<double>>(nbins, 0.0);
  for (const auto& [d, w] : result.atoms) {
    auto j = static_cast<std::size_t>(d / bin);
    if (j >= nbins) j = nbins - 1;
    (*hist)[j] += w / (total_weight * bin);
  }
  dist.density = [hist, bin, nbins](double x) {
    if (x < 0.0) return 0.0;
    const auto j = static_cast<std::size_t>(x / bin);
    if (j >= nbins) return 0.0;
    return (*hist)[j];
  };
  dist.probes = *xs;
  dist.support_hint = top;
  result.distribution = std::move(dist);
  return result;
}

}  // namespace qgraph
