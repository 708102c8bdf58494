#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "qgraph/errors.hpp"
#include "qgraph/metric_graph.hpp"
#include "qgraph/scan.hpp"
#include "qgraph/secular.hpp"

namespace qgraph {

struct SolverSettings {
  int oversample = 8;            // scan nodes per mean spacing (>= 4)
  double refine_rel_tol = 1e-12; // bisection width <= this * max(1, k)
  double sigma_floor = 1e-9;     // smallest-singular-value acceptance floor
  double sigma_slack = 64.0;     // times l_max * refine tol * max(1, k)
  double pole_guard = 1e-5;      // pole-coincidence flag threshold
  double audit_rel = 0.005;      // Weyl-law sanity audit: relative slack
  double audit_abs = 2.0;        // Weyl-law sanity audit: absolute slack
  int audit_chunks = 16;         // subintervals named when the sanity audit fails
};

struct Level {
  double k = 0.0;
  double sigma = 0.0;           // smallest singular value of I - S(k)
  bool pole_coincident = false; // k within the guard band of some sin(k l_b) = 0
};

// Levels of one scan window. Nondecreasing; ties appear only for exact
// degeneracies — rationally related lengths under the integrable generator,
// or multiplicities beyond floating-point separation under find_levels.
struct SpectrumSample {
  std::vector<Level> levels;
  double k_min = 0.0;
  double k_max = 0.0;
  SolverSettings settings;
  double expected_count = 0.0;  // mean-density estimate for the window
  double audit_deviation = 0.0; // found - expected
  bool rescanned = false;       // the eigenphase audit recovered scan misses

  std::vector<double> ks() const {
    std::vector<double> out;
    out.reserve(levels.size());
    for (const Level& l : levels) out.push_back(l.k);
    return out;
  }
};

namespace detail {

inline double min_pole_gap_at(const MetricGraph& g, double k) {
  double gap = 2.0;
  for (const Bond& b : g.bonds())
    gap = std::min(gap, pole_gap(b.is_loop(), k * b.length));
  return gap;
}

// Sign scan over the absolute grid x_j = j * step (single product per node,
// so any partition of the index range reproduces the serial node values
// bit-for-bit), bisection refinement, then the unitary-route filter:
// accepted roots must be near-singular points of I - S(k).
inline std::vector<Level> scan_window(const MetricGraph& g, double k_min, double k_max,
                                      int oversample, const SolverSettings& st) {
  const double mean_spacing = std::numbers::pi / g.total_length();
  const double step = mean_spacing / static_cast<double>(oversample);
  const auto j_lo = static_cast<long long>(std::floor(k_min / step));
  auto j_hi = static_cast<long long>(std::ceil(k_max / step));
  while (static_cast<double>(j_hi) * step < k_max) ++j_hi;

  SecularFunction f(g, SecularVariant::regularized_det_h);
  UnitarySecular unitary(g);
  double l_max = 0.0;
  for (const Bond& b : g.bonds()) l_max = std::max(l_max, b.length);

  std::vector<double> raw_roots;
  double x_prev = static_cast<double>(j_lo) * step;
  double f_prev = f(x_prev);
  int s_prev = sign_of(f_prev);
  if (s_prev == 0) raw_roots.push_back(x_prev);
  for (long long j = j_lo + 1; j <= j_hi; ++j) {
    const double x = static_cast<double>(j) * step;
    const double fx = f(x);
    const int s = sign_of(fx);
    if (s == 0) {
      raw_roots.push_back(x);
      s_prev = 0;
    } else {
      if (s_prev != 0 && s != s_prev) {
        const double xtol = st.refine_rel_tol * std::max(1.0, x);
        raw_roots.push_back(bisect_root(f, x_prev, x, f_prev, fx, xtol));
      }
      f_prev = fx;
      s_prev = s;
    }
    x_prev = x;
  }

  std::vector<Level> out;
  for (double r : raw_roots) {
    if (!(r > k_min) || !(r <= k_max)) continue;
    Level lvl;
    lvl.k = r;
    lvl.sigma = unitary.smallest_singular(r);
    lvl.pole_coincident = min_pole_gap_at(g, r) < st.pole_guard;
    const double accept =
        std::max(st.sigma_floor, st.sigma_slack * l_max * st.refine_rel_tol * std::max(1.0, r));
    if (lvl.sigma <= accept) out.push_back(lvl);
  }
  return out;
}

// Memoized eigenphase-sum probes with the exact interval counter built on
// them. Counts over intervals that share probe points telescope exactly:
// count(a, x) + count(x, b) == count(a, b), because each probe value is
// computed once and reused.
class LevelCounter {
 public:
  explicit LevelCounter(const UnitarySecular& u)
      : unitary_(&u), two_length_(2.0 * u.total_length()) {}

  // Number of levels in (a, b], multiplicity included.
  long long count(double a, double b) {
    const double raw =
        (two_length_ * (b - a) - (sum_at(b) - sum_at(a))) / (2.0 * std::numbers::pi);
    return std::llround(raw);
  }

 private:
  double sum_at(double x) {
    auto it = sums_.find(x);
    if (it == sums_.end()) it = sums_.emplace(x, unitary_->eigenphase_sum(x)).first;
    return it->second;
  }

  const UnitarySecular* unitary_;
  double two_length_;
  std::map<double, double> sums_;
};

// A sign scan can only lose roots that bunch inside one grid cell: an even
// cluster leaves no sign change at the nodes, and of an odd cluster only one
// member gets bracketed. Graphs whose spacing density does not vanish at
// zero produce such clusters at a fixed rate per level, so no oversampling
// factor is ever sufficient. The eigenphase counter is exact, which turns
// the loss into a per-cell deficit that can be hunted down: deficient cells
// are split recursively at root-free probe points until a missing root sits
// alone in a sign-changing cell (plain bisection finishes), or until the
// cell hits the floating-point width floor, where the remaining count is
// emitted at the midpoint (the multiplicity-beyond-resolution case). The
// counter outranks the singular-value filter for candidates found here: if
// the filter rejects a bisected root but the counter insists a level lives
// in its immediate neighborhood, the root is kept.
inline void recover_missing(const MetricGraph& g, double k_min, double k_max,
                            const SolverSettings& st, std::vector<Level>& levels) {
  UnitarySecular unitary(g);
  LevelCounter counter(unitary);

  std::vector<double> ks;
  ks.reserve(levels.size());
  for (const Level& l : levels) ks.push_back(l.k);

  const auto found_in = [&](double a, double b) -> long long {
    return std::upper_bound(ks.begin(), ks.end(), b) -
           std::upper_bound(ks.begin(), ks.end(), a);
  };
  // A level within rounding distance of a probe can be counted on either
  // side of it. For the window edges, where no sibling cell absorbs the
  // ambiguity, a hair of slack on the boundaries decides consistency.
  const auto consistent_at_edges = [&](double a, double b) -> bool {
    const double ea = 64.0 * st.refine_rel_tol * std::max(1.0, a);
    const double eb = 64.0 * st.refine_rel_tol * std::max(1.0, b);
    for (double aa : {a, a - ea, a + ea})
      for (double bb : {b, b - eb, b + eb})
        if (counter.count(aa, bb) == found_in(aa, bb)) return true;
    return false;
  };

  if (counter.count(k_min, k_max) == found_in(k_min, k_max)) return;

  SecularFunction f(g, SecularVariant::regularized_det_h);
  double l_max = 0.0;
  for (const Bond& b : g.bonds()) l_max = std::max(l_max, b.length);
  const auto xtol_at = [&](double x) { return st.refine_rel_tol * std::max(1.0, x); };

  std::vector<Level> added;
  const auto emit = [&](double r) {
    Level lvl;
    lvl.k = r;
    lvl.sigma = unitary.smallest_singular(r);
    lvl.pole_coincident = min_pole_gap_at(g, r) < st.pole_guard;
    added.push_back(lvl);
    ks.insert(std::upper_bound(ks.begin(), ks.end(), r), r);
  };

  std::vector<std::pair<double, double>> stack{{k_min, k_max}};
  std::size_t budget = 4000000;
  while (!stack.empty()) {
    const auto [a, b] = stack.back();
    stack.pop_back();
    if (--budget == 0)
      throw MissingLevels("level recovery exceeded its subdivision budget", a, b,
                          static_cast<double>(counter.count(a, b)),
                          static_cast<std::size_t>(found_in(a, b)));
    const long long miss = counter.count(a, b) - found_in(a, b);
    if (miss == 0) continue;
    if (miss < 0) {
      if ((a == k_min || b == k_max) && consistent_at_edges(a, b)) continue;
      throw MissingLevels("found levels exceed the eigenphase count", a, b,
                          static_cast<double>(counter.count(a, b)),
                          static_cast<std::size_t>(found_in(a, b)));
    }
    const double width = b - a;
    if (width <= 256.0 * xtol_at(b)) {
      // Roots below separable width: bisect once if a sign change helps the
      // position, then emit the remaining count at the midpoint.
      const double fa = f(a);
      const double fb = f(b);
      long long remaining = miss;
      if (sign_of(fa) != 0 && sign_of(fb) != 0 && sign_of(fa) != sign_of(fb)) {
        emit(bisect_root(f, a, b, fa, fb, xtol_at(b)));
        --remaining;
      }
      for (; remaining > 0; --remaining) emit(a + 0.5 * width);
      continue;
    }
    if (miss == 1 && found_in(a, b) == 0) {
      const double fa = f(a);
      const double fb = f(b);
      if (sign_of(fa) != 0 && sign_of(fb) != 0 && sign_of(fa) != sign_of(fb)) {
        const double r = bisect_root(f, a, b, fa, fb, xtol_at(b));
        const double accept = std::max(
            st.sigma_floor, st.sigma_slack * l_max * st.refine_rel_tol * std::max(1.0, r));
        if (unitary.smallest_singular(r) <= accept) {
          emit(r);
          continue;
        }
        // The scanning function also vanishes at sin poles that carry no
        // level; let the counter arbitrate the rejected candidate.
        const double gu = 16.0 * xtol_at(r);
        const double lo = std::max(a, r - gu);
        const double hi = std::min(b, r + gu);
        if (counter.count(lo, hi) >= 1) {
          emit(r);
          continue;
        }
        if (lo > a) stack.emplace_back(a, lo);
        if (hi < b) stack.emplace_back(hi, b);
        continue;
      }
    }
    // Split at a probe point clear of every recorded root.
    double x = a + 0.5 * width;
    const double gu = 16.0 * xtol_at(b);
    for (int t = 1; t <= 8; ++t) {
      const auto it = std::lower_bound(ks.begin(), ks.end(), x - gu);
      if (it == ks.end() || *it > x + gu) break;
      double frac = 0.5 + 0.381966011250105 * static_cast<double>(t);
      frac -= std::floor(frac);
      x = a + width * (0.125 + 0.75 * frac);
    }
    stack.emplace_back(a, x);
    stack.emplace_back(x, b);
  }

  if (!consistent_at_edges(k_min, k_max))
    throw MissingLevels("level recovery did not converge", k_min, k_max,
                        static_cast<double>(counter.count(k_min, k_max)),
                        static_cast<std::size_t>(found_in(k_min, k_max)));

  if (!added.empty()) {
    levels.insert(levels.end(), added.begin(), added.end());
    std::sort(levels.begin(), levels.end(),
              [](const Level& u, const Level& v) { return u.k < v.k; });
  }
}

}  // namespace detail

// All eigen-wavenumbers in (k_min, k_max]: sign scan of the regularized
// secular determinant at `oversample` nodes per mean spacing, bisection to
// |dk| <= refine_rel_tol * max(1, k), spurious-zero rejection through the
// smallest singular value of I - S(k). The exact eigenphase counter then
// audits the window and recovers any roots the scan lost to clustering, so
// the level list is complete independent of the oversampling rate. A final
// Weyl-law sanity check names the worst subinterval if the mean density and
// the recovered count still disagree.
inline SpectrumSample find_levels(const MetricGraph& g, double k_min, double k_max,
                                  const SolverSettings& settings = {}) {
  if (!(k_min > 0.0) || !(k_max > k_min))
    throw InvalidInput("find_levels requires 0 < k_min < k_max");
  if (settings.oversample < 4)
    throw InvalidInput("find_levels requires oversample >= 4");

  SpectrumSample out;
  out.k_min = k_min;
  out.k_max = k_max;
  out.settings = settings;
  out.expected_count = g.mean_density() * (k_max - k_min);
  const double audit_bound =
      std::max(settings.audit_abs, settings.audit_rel * out.expected_count);

  out.levels = detail::scan_window(g, k_min, k_max, settings.oversample, settings);
  const std::size_t scanned = out.levels.size();
  detail::recover_missing(g, k_min, k_max, settings, out.levels);
  out.rescanned = out.levels.size() != scanned;
  out.audit_deviation = static_cast<double>(out.levels.size()) - out.expected_count;
  if (std::abs(out.audit_deviation) > audit_bound) {
    const int chunks = std::max(1, settings.audit_chunks);
    const double width = (k_max - k_min) / chunks;
    double worst_abs = -1.0;
    double worst_lo = k_min, worst_hi = k_max, worst_expected = out.expected_count;
    std::size_t worst_found = out.levels.size();
    for (int c = 0; c < chunks; ++c) {
      const double lo = k_min + c * width;
      const double hi = (c == chunks - 1) ? k_max : lo + width;
      std::size_t found = 0;
      for (const Level& l : out.levels)
        if (l.k > lo && l.k <= hi) ++found;
      const double expected = g.mean_density() * (hi - lo);
      const double dev = std::abs(static_cast<double>(found) - expected);
      if (dev > worst_abs) {
        worst_abs = dev;
        worst_lo = lo;
        worst_hi = hi;
        worst_expected = expected;
        worst_found = found;
      }
    }
    throw MissingLevels(
        "level count deviates from the mean-density estimate after recovery; worst "
        "subinterval [" + std::to_string(worst_lo) + ", " + std::to_string(worst_hi) + "]",
        worst_lo, worst_hi, worst_expected, worst_found);
  }
  return out;
}

inline SpectrumSample find_levels(const MetricGraph& g, double k_min, double k_max,
                                  int oversample) {
  SolverSettings st;
  st.oversample = oversample;
  return find_levels(g, k_min, k_max, st);
}

// First n levels above k = 0. Sizes the window by the mean density with a
// fluctuation margin and widens until n levels are present.
inline std::vector<double> find_first_levels(const MetricGraph& g, std::size_t n,
                                             const SolverSettings& settings = {}) {
  if (n == 0) return {};
  const double density = g.mean_density();
  const double k_min = 0.25 / density / std::max(4, settings.oversample);
  double k_max = (static_cast<double>(n) + 6.0 * std::sqrt(static_cast<double>(n)) + 16.0) /
                 density;
  for (int attempt = 0; attempt < 8; ++attempt) {
    SpectrumSample s = find_levels(g, k_min, k_max, settings);
    if (s.levels.size() >= n) {
      std::vector<double> ks = s.ks();
      ks.resize(n);
      return ks;
    }
    k_max += (static_cast<double>(n - s.levels.size()) + 16.0) / density;
  }
  throw MissingLevels("window widening failed to reach the requested level count",
                      k_min, k_max, static_cast<double>(n), 0);
}

// Spectrum of fully decoupled bonds (Dirichlet limit): the merged union of
// the arithmetic progressions {m pi / l_b, m >= 1} up to k_max. Exact ties
// (rationally related lengths) stay as repeated entries. The audit field is
// informational: each progression truncates at floor(k_max l/pi), so the
// deviation lies in (-B, 0] and no error is raised.
inline SpectrumSample integrable_levels(const std::vector<double>& lengths, double k_max) {
  if (lengths.empty()) throw InvalidInput("integrable_levels requires at least one length");
  if (!(k_max > 0.0)) throw InvalidInput("integrable_levels requires k_max > 0");
  double total = 0.0;
  std::vector<double> ks;
  for (double l : lengths) {
    if (!(l > 0.0) || !std::isfinite(l))
      throw InvalidInput("integrable_levels requires positive finite lengths");
    total += l;
    const double spacing = std::numbers::pi / l;
    for (long long m = 1; static_cast<double>(m) * spacing <= k_max; ++m)
      ks.push_back(static_cast<double>(m) * spacing);
  }
  std::sort(ks.begin(), ks.end());

  SpectrumSample out;
  out.k_min = 0.0;
  out.k_max = k_max;
  out.expected_count = total / std::numbers::pi * k_max;
  out.levels.reserve(ks.size());
  for (double k : ks) out.levels.push_back({k, 0.0, true});
  out.audit_deviation = static_cast<double>(ks.size()) - out.expected_count;
  return out;
}

}  // namespace qgraph
