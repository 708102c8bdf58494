#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace qgraph {

namespace detail {

template <class F>
double adaptive_simpson_rec(F& f, double a, double b, double fa, double fm, double fb,
                            double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

// Adaptive Simpson integral of f over [a, b] with absolute tolerance tol.
template <class F>
double integrate(F&& f, double a, double b, double tol = 1e-11, int max_depth = 40) {
  if (!(b > a)) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a);
  const double fm = f(m);
  const double fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

// Cumulative integral of a density sampled on a uniform grid over [0, hi].
// Cell integrals use Simpson on the cell; returns grid values c[j] with
// c[0] = 0 so that c[j] ~= integral of f over [0, j*h].
class CumulativeGrid {
 public:
  CumulativeGrid() = default;

  template <class F>
  CumulativeGrid(F&& f, double hi, std::size_t cells) : hi_(hi) {
    values_.resize(cells + 1, 0.0);
    const double h = hi / static_cast<double>(cells);
    double acc = 0.0;
    double f_lo = f(0.0);
    for (std::size_t j = 0; j < cells; ++j) {
      const double a = static_cast<double>(j) * h;
      const double b = a + h;
      const double fm = f(a + 0.5 * h);
      const double f_hi = f(b);
      acc += h / 6.0 * (f_lo + 4.0 * fm + f_hi);
      values_[j + 1] = acc;
      f_lo = f_hi;
    }
  }

  double hi() const { return hi_; }
  double total() const { return values_.empty() ? 0.0 : values_.back(); }

  // Linear interpolation between grid values; clamped outside [0, hi].
  double at(double x) const {
    if (values_.size() < 2) return 0.0;
    if (x <= 0.0) return 0.0;
    if (x >= hi_) return values_.back();
    const double h = hi_ / static_cast<double>(values_.size() - 1);
    const double u = x / h;
    const auto j = static_cast<std::size_t>(u);
    const double frac = u - static_cast<double>(j);
    return values_[j] + frac * (values_[j + 1] - values_[j]);
  }

 private:
  double hi_ = 0.0;
  std::vector<double> values_;
};

}  // namespace qgraph
