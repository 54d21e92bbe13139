#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "moire/errors.hpp"

namespace moire::roots {

struct RootResult {
  double x = 0.0;
  int iterations = 0;
};

/// Root of a function that changes sign on [a, b]. fg(x) returns {f(x), f'(x)}.
/// Newton steps are taken when they stay inside the current bracket, bisection otherwise.
template <class FG>
RootResult newton_bracketed(FG&& fg, double a, double b, double xtol = 1e-15, int max_iter = 200) {
  auto [fa, da] = fg(a);
  auto [fb, db] = fg(b);
  (void)da;
  (void)db;
  if (fa == 0.0) return {a, 0};
  if (fb == 0.0) return {b, 0};
  if ((fa > 0.0) == (fb > 0.0))
    throw SolverError("newton_bracketed: no sign change on the bracket");
  double lo = a, hi = b;
  const bool rising = fa < 0.0;
  double x = 0.5 * (lo + hi);
  for (int it = 1; it <= max_iter; ++it) {
    auto [f, d] = fg(x);
    if (f == 0.0) return {x, it};
    if ((f < 0.0) == rising)
      lo = x;
    else
      hi = x;
    double xn = (d != 0.0 && std::isfinite(d)) ? x - f / d : lo - 1.0;
    if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
    const double step = std::abs(xn - x);
    x = xn;
    if (step <= xtol * std::max(1.0, std::abs(x)) || hi - lo <= xtol * std::max(1.0, std::abs(x)))
      return {x, it};
  }
  return {x, max_iter};
}

/// Plain bisection for functions without a convenient derivative.
template <class F>
RootResult bisect(F&& f, double a, double b, double xtol = 1e-14, int max_iter = 300) {
  double fa = f(a), fb = f(b);
  if (fa == 0.0) return {a, 0};
  if (fb == 0.0) return {b, 0};
  if ((fa > 0.0) == (fb > 0.0)) throw SolverError("bisect: no sign change on the bracket");
  for (int it = 1; it <= max_iter; ++it) {
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    if (fm == 0.0 || 0.5 * (b - a) <= xtol * std::max(1.0, std::abs(m))) return {m, it};
    if ((fm > 0.0) == (fa > 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return {0.5 * (a + b), max_iter};
}

}  // namespace moire::roots
