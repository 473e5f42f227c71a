// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <cmath>
#include <stdexcept>

namespace cred {

struct MinimizeResult {
  double x = 0.0;
  double fx = 0.0;
  int iterations = 0;
  // True once the bracket around x shrank below tolerance.
  bool converged = false;
};

// Brent's univariate minimizer: golden-section steps with successive
// parabolic interpolation on (lo, hi). Derivative free.
template <class F>
MinimizeResult brent_minimize(F&& f, double lo, double hi,
                              double rel_tol = 1e-10, double abs_tol = 1e-12,
                              int max_iter = 200) {
  if (!(lo < hi)) throw std::invalid_argument("brent_minimize: lo < hi required");
  const double golden = 0.3819660112501051;
  double a = lo, b = hi;
  double x = a + golden * (b - a);
  double w = x, v = x;
  double fx = f(x), fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  MinimizeResult res;
  for (int iter = 1; iter <= max_iter; ++iter) {
    res.iterations = iter;
    double xm = 0.5 * (a + b);
    double tol1 = rel_tol * std::fabs(x) + abs_tol;
    double tol2 = 2.0 * tol1;
    if (std::fabs(x - xm) <= tol2 - 0.5 * (b - a)) {
      res.converged = true;
      break;
    }
    bool take_golden = true;
    if (std::fabs(e) > tol1) {
      // Trial parabola through x, v, w.
      double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::fabs(q);
      double e_old = e;
      e = d;
      if (std::fabs(p) < std::fabs(0.5 * q * e_old) && p > q * (a - x) &&
          p < q * (b - x)) {
        d = p / q;
        double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = x < xm ? tol1 : -tol1;
        take_golden = false;
      }
    }
    if (take_golden) {
      e = (x < xm ? b : a) - x;
      d = golden * e;
    }
    double u = std::fabs(d) >= tol1 ? x + d : x + (d > 0.0 ? tol1 : -tol1);
    double fu = f(u);
    if (fu <= fx) {
      if (u < x) b = x; else a = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  res.x = x;
  res.fx = fx;
  return res;
}

}  // namespace cred
