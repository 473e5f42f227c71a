// Apache License, Version 2.0, refer to LICENSE.txt
#include "cred/credibility.hpp"

#include <cmath>
#include <stdexcept>

namespace cred {

CredibilityBlend jewell_premium(const JewellPrior& prior, double phi, double n,
                                double ybar) {
  if (!(prior.n0 > 0.0) || !std::isfinite(prior.n0))
    throw std::invalid_argument("jewell_premium: n0 must be positive");
  if (!(phi > 0.0) || !std::isfinite(phi))
    throw std::invalid_argument("jewell_premium: phi must be positive");
  if (n < 0.0 || !std::isfinite(n))
    throw std::invalid_argument("jewell_premium: n must be nonnegative");
  CredibilityBlend blend;
  blend.z = n / (phi * prior.n0 + n);
  if (blend.z == 0.0) {
    blend.premium = prior.x0;  // no data: ybar plays no role
    return blend;
  }
  if (!std::isfinite(ybar))
    throw std::invalid_argument("jewell_premium: ybar must be finite");
  blend.premium = (1.0 - blend.z) * prior.x0 + blend.z * ybar;
  return blend;
}

ConjugateParams conjugate_update(double n0, const Eigen::VectorXd& x0,
                                 double phi, const Eigen::VectorXd& ybar) {
  if (!(n0 > 0.0) || !std::isfinite(n0))
    throw std::invalid_argument("conjugate_update: n0 must be positive");
  if (!(phi > 0.0) || !std::isfinite(phi))
    throw std::invalid_argument("conjugate_update: phi must be positive");
  if (x0.size() != ybar.size())
    throw std::invalid_argument("conjugate_update: x0/ybar length mismatch");
  ConjugateParams out;
  out.n0 = n0 + 1.0 / phi;
  out.x0 = (ybar + phi * n0 * x0) / (phi * n0 + 1.0);
  return out;
}

Type2Result type2_feasible_2class(std::pair<double, double> ybar,
                                  std::pair<double, double> manual) {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(ybar.first) || !positive(ybar.second) ||
      !positive(manual.first) || !positive(manual.second))
    throw std::invalid_argument("type2_feasible_2class: inputs must be positive");

  Type2Result res;
  // Blended premiums sweep the rectangle spanned by ybar and manual; the
  // log-link model premiums for rows (0) and (1) are (1, e^beta), a vertical
  // ray. Intersection only constrains the first coordinate.
  double lo = std::min(ybar.first, manual.first);
  double hi = std::max(ybar.first, manual.first);
  if (lo > 1.0 || hi < 1.0) return res;

  res.feasible = true;
  if (ybar.first == manual.first) {
    res.z1 = 0.0;  // every z1 works; report the smallest
  } else {
    res.z1 = (manual.first - 1.0) / (manual.first - ybar.first);
    res.z1 = std::min(1.0, std::max(0.0, res.z1));
  }
  // Any consistent witness for the second class: take z2 = 0, so the model
  // premium must equal the manual one.
  res.z2 = 0.0;
  res.beta = std::log(manual.second);
  return res;
}

}  // namespace cred
