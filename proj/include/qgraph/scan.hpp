#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace qgraph {

// Sign with zero treated as its own state.
inline int sign_of(double x) { return x > 0.0 ? 1 : (x < 0.0 ? -1 : 0); }

// Bracketed bisection. Requires f(a) and f(b) of opposite sign (or zero at an
// endpoint). Narrows until the bracket width drops below xtol and returns the
// midpoint. Purely deterministic: no derivative steps, no secant jumps.
template <class F>
double bisect_root(F&& f, double a, double b, double fa, double fb, double xtol) {
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  for (int it = 0; it < 200 && (b - a) > xtol; ++it) {
    const double m = a + 0.5 * (b - a);
    if (m <= a || m >= b) break;  // bracket at floating resolution
    const double fm = f(m);
    if (fm == 0.0) return m;
    if ((fm > 0.0) == (fa > 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
      fb = fm;
    }
  }
  return a + 0.5 * (b - a);
}

template <class F>
double bisect_root(F&& f, double a, double b, double xtol) {
  const double fa = f(a);
  const double fb = f(b);
  return bisect_root(std::forward<F>(f), a, b, fa, fb, xtol);
}

// One detected zero of a scanned function.
struct ScanRoot {
  double x = 0.0;
  std::size_t grid_index = 0;  // left node of the bracketing grid cell
};

// Fixed-step sign scan over the closed grid x_j = lo + j*step, j = 0..n,
// followed by bisection inside every bracket. A node that evaluates exactly
// to zero is taken as a root itself; brackets are then formed against the
// previous nonzero sign so adjacent cells cannot double-report. xtol_at(x)
// supplies the local refinement tolerance.
template <class F, class Tol>
std::vector<ScanRoot> scan_roots(F&& f, double lo, std::size_t node_count, double step,
                                 Tol&& xtol_at) {
  std::vector<ScanRoot> roots;
  if (node_count < 2) return roots;
  double x_prev = lo;
  double f_prev = f(x_prev);
  int s_prev = sign_of(f_prev);
  if (s_prev == 0) roots.push_back({x_prev, 0});
  for (std::size_t j = 1; j < node_count; ++j) {
    const double x = lo + static_cast<double>(j) * step;
    const double fx = f(x);
    const int s = sign_of(fx);
    if (s == 0) {
      // The node itself is the root; it consumes any sign change through it.
      roots.push_back({x, j});
      s_prev = 0;
    } else {
      if (s_prev != 0 && s != s_prev) {
        const double r =
            bisect_root(f, x_prev, x, f_prev, fx, xtol_at(0.5 * (x_prev + x)));
        roots.push_back({r, j - 1});
      }
      f_prev = fx;
      s_prev = s;
    }
    x_prev = x;
  }
  return roots;
}

}  // namespace qgraph
