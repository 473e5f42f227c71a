// Apache License, Version 2.0, refer to LICENSE.txt
#include "cred/edf.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cred {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

[[noreturn]] void domain_fail(const Family& fam, const std::string& what) {
  throw std::domain_error(std::string(fam.name()) + ": " + what);
}

void check_pair(const Family& fam, double y, double mu) {
  if (!std::isfinite(y) || !fam.response_in_support(y))
    domain_fail(fam, "response y=" + std::to_string(y) + " outside support");
  if (!std::isfinite(mu) || !fam.mean_in_domain(mu))
    domain_fail(fam, "mean mu=" + std::to_string(mu) + " outside domain");
}

// Poisson draw, exact. Sequential search below lambda = 10, transformed
// rejection with squeeze (Hormann's PTRS) above.
long poisson_draw(rng::Engine& eng, double lambda) {
  if (lambda < 10.0) {
    const double limit = std::exp(-lambda);
    double prod = 1.0;
    long k = -1;
    do {
      ++k;
      prod *= rng::uniform01(eng);
    } while (prod > limit);
    return k;
  }
  const double b = 0.931 + 2.53 * std::sqrt(lambda);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double log_lambda = std::log(lambda);
  for (;;) {
    double u = rng::uniform01(eng) - 0.5;
    double v = rng::uniform_pos(eng);
    double us = 0.5 - std::fabs(u);
    double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<long>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        k * log_lambda - lambda - std::lgamma(k + 1.0))
      return static_cast<long>(k);
  }
}

// Marsaglia-Tsang rejection with squeeze step; valid for every shape > 0
// (shapes below one are boosted through the power-of-uniform identity).
double gamma_draw(rng::Engine& eng, double shape) {
  if (shape < 1.0) {
    double u = rng::uniform_pos(eng);
    return gamma_draw(eng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng::normal01(eng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    double u = rng::uniform_pos(eng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

// Michael-Schucany-Haas: chi-square transform, then pick the root by a
// uniform branch. The small root is computed in the cancellation-free form
// mu (s - mu nu) / (s + mu nu).
double inverse_gaussian_draw(rng::Engine& eng, double mu, double lambda) {
  double z = rng::normal01(eng);
  double nu = z * z;
  if (nu == 0.0) return mu;
  double s = std::sqrt(4.0 * mu * lambda * nu + mu * mu * nu * nu);
  double x_small = 4.0 * mu * mu * lambda * nu / ((s + mu * nu) * (s + mu * nu));
  if (rng::uniform01(eng) <= mu / (mu + x_small)) return x_small;
  return mu * mu / x_small;
}

}  // namespace

Family Family::normal() { return Family(FamilyKind::Normal); }
Family Family::poisson() { return Family(FamilyKind::Poisson); }
Family Family::gamma() { return Family(FamilyKind::Gamma); }
Family Family::inverse_gaussian() {
  return Family(FamilyKind::InverseGaussian);
}

const char* Family::name() const {
  switch (kind_) {
    case FamilyKind::Normal: return "normal";
    case FamilyKind::Poisson: return "poisson";
    case FamilyKind::Gamma: return "gamma";
    case FamilyKind::InverseGaussian: return "inverse_gaussian";
  }
  return "?";
}

bool Family::mean_in_domain(double mu) const {
  if (!std::isfinite(mu)) return false;
  return kind_ == FamilyKind::Normal ? true : mu > 0.0;
}

bool Family::response_in_support(double y) const {
  if (!std::isfinite(y)) return false;
  switch (kind_) {
    case FamilyKind::Normal: return true;
    case FamilyKind::Poisson: return y >= 0.0;
    default: return y > 0.0;
  }
}

std::optional<double> Family::fixed_dispersion() const {
  if (kind_ == FamilyKind::Poisson) return 1.0;
  return std::nullopt;
}

double Family::cumulant(double theta) const {
  switch (kind_) {
    case FamilyKind::Normal: return 0.5 * theta * theta;
    case FamilyKind::Poisson: return std::exp(theta);
    case FamilyKind::Gamma: return -std::log(-theta);
    case FamilyKind::InverseGaussian: return -std::sqrt(-2.0 * theta);
  }
  return 0.0;
}

double Family::canonical_parameter(double mu) const {
  switch (kind_) {
    case FamilyKind::Normal: return mu;
    case FamilyKind::Poisson: return std::log(mu);
    case FamilyKind::Gamma: return -1.0 / mu;
    case FamilyKind::InverseGaussian: return -0.5 / (mu * mu);
  }
  return 0.0;
}

double Family::mean_value(double theta) const {
  switch (kind_) {
    case FamilyKind::Normal: return theta;
    case FamilyKind::Poisson: return std::exp(theta);
    case FamilyKind::Gamma: return -1.0 / theta;
    case FamilyKind::InverseGaussian: return 1.0 / std::sqrt(-2.0 * theta);
  }
  return 0.0;
}

double Family::variance_function(double mu) const {
  switch (kind_) {
    case FamilyKind::Normal: return 1.0;
    case FamilyKind::Poisson: return mu;
    case FamilyKind::Gamma: return mu * mu;
    case FamilyKind::InverseGaussian: return mu * mu * mu;
  }
  return 0.0;
}

double unit_deviance(const Family& fam, double y, double mu) {
  check_pair(fam, y, mu);
  double d = 0.0;
  switch (fam.kind()) {
    case FamilyKind::Normal: {
      double r = y - mu;
      return r * r;
    }
    case FamilyKind::Poisson:
      // y log y -> 0 as y -> 0, so the boundary value is 2 mu.
      d = y == 0.0 ? 2.0 * mu : 2.0 * (y * std::log(y / mu) - (y - mu));
      break;
    case FamilyKind::Gamma:
      d = 2.0 * (std::log(mu / y) + y / mu - 1.0);
      break;
    case FamilyKind::InverseGaussian: {
      double r = y - mu;
      d = r * r / (mu * mu * y);
      break;
    }
  }
  // Cancellation near y == mu can round a hair below zero.
  return std::max(d, 0.0);
}

std::pair<double, double> deviance_parts(const Family& fam, double y,
                                         double mu) {
  check_pair(fam, y, mu);
  // d1(y) = 2 [y theta(y) - kappa(theta(y))],
  // d2(y, mu) = 2 [kappa(theta(mu)) - y theta(mu)], written per family in
  // closed form. d2 is affine in y by construction.
  switch (fam.kind()) {
    case FamilyKind::Normal:
      return {y * y, mu * mu - 2.0 * y * mu};
    case FamilyKind::Poisson: {
      double d1 = y == 0.0 ? 0.0 : 2.0 * y * (std::log(y) - 1.0);
      return {d1, 2.0 * (mu - y * std::log(mu))};
    }
    case FamilyKind::Gamma:
      return {-2.0 * (1.0 + std::log(y)), 2.0 * (std::log(mu) + y / mu)};
    case FamilyKind::InverseGaussian:
      return {1.0 / y, y / (mu * mu) - 2.0 / mu};
  }
  return {0.0, 0.0};
}

double log_density(const Family& fam, const WeightedObs& obs, double mu,
                   double phi) {
  check_pair(fam, obs.y, mu);
  if (!(obs.w > 0.0) || !std::isfinite(obs.w))
    domain_fail(fam, "weight must be positive");
  if (!(phi > 0.0) || !std::isfinite(phi))
    domain_fail(fam, "dispersion must be positive");
  if (auto fixed = fam.fixed_dispersion(); fixed && phi != *fixed)
    domain_fail(fam, "dispersion is fixed at " + std::to_string(*fixed));

  const double y = obs.y;
  const double disp = phi / obs.w;  // dispersion of the aggregated unit
  switch (fam.kind()) {
    case FamilyKind::Normal: {
      double r = y - mu;
      return -0.5 * (kLog2Pi + std::log(disp) + r * r / disp);
    }
    case FamilyKind::Poisson: {
      // Count form: w y total events over exposure w.
      double n = obs.w * y;
      return n * std::log(obs.w * mu) - obs.w * mu - std::lgamma(n + 1.0);
    }
    case FamilyKind::Gamma: {
      double a = obs.w / phi;  // shape
      return a * std::log(a / mu) - std::lgamma(a) + (a - 1.0) * std::log(y) -
             a * y / mu;
    }
    case FamilyKind::InverseGaussian: {
      double lambda = obs.w / phi;
      double r = y - mu;
      return 0.5 * (std::log(lambda) - kLog2Pi - 3.0 * std::log(y)) -
             lambda * r * r / (2.0 * mu * mu * y);
    }
  }
  return 0.0;
}

double log_normalizer(const Family& fam, double y, double phi) {
  if (!fam.proper_dispersion())
    throw std::invalid_argument(std::string(fam.name()) +
                                ": no factorized normalizer");
  if (!std::isfinite(y) || !fam.response_in_support(y))
    domain_fail(fam, "response outside support");
  if (!(phi > 0.0) || !std::isfinite(phi))
    domain_fail(fam, "dispersion must be positive");
  switch (fam.kind()) {
    case FamilyKind::Normal:
      return -0.5 * (kLog2Pi + std::log(phi));
    case FamilyKind::Gamma: {
      double a = 1.0 / phi;
      return -a - std::lgamma(a) + a * std::log(a) - std::log(y);
    }
    case FamilyKind::InverseGaussian:
      return -0.5 * (kLog2Pi + std::log(phi) + 3.0 * std::log(y));
    default:
      break;
  }
  return 0.0;
}

WeightedObs aggregate(const Family& fam, std::span<const WeightedObs> obs) {
  double sum_w = 0.0;
  double sum_wy = 0.0;
  for (const auto& o : obs) {
    if (!std::isfinite(o.w) || o.w < 0.0)
      domain_fail(fam, "weights must be nonnegative");
    if (o.w == 0.0) continue;
    if (!std::isfinite(o.y) || !fam.response_in_support(o.y))
      domain_fail(fam, "response outside support");
    sum_w += o.w;
    sum_wy += o.w * o.y;
  }
  if (!(sum_w > 0.0))
    throw std::invalid_argument(std::string(fam.name()) +
                                ": total weight must be positive");
  return {sum_wy / sum_w, sum_w};
}

double log_e_phi(const Family& fam, double phi) {
  if (!fam.proper_dispersion())
    throw std::invalid_argument(std::string(fam.name()) +
                                ": not a proper dispersion model");
  if (!(phi > 0.0) || !std::isfinite(phi))
    domain_fail(fam, "dispersion must be positive");
  switch (fam.kind()) {
    case FamilyKind::Normal:
    case FamilyKind::InverseGaussian:
      return -0.5 * std::log(phi);
    case FamilyKind::Gamma: {
      double a = 1.0 / phi;
      return -a - std::lgamma(a) + a * std::log(a);
    }
    default:
      break;
  }
  return 0.0;
}

double e_phi(const Family& fam, double phi) {
  return std::exp(log_e_phi(fam, phi));
}

double sample(const Family& fam, double mu, double phi, double w,
              rng::Engine& eng) {
  if (!fam.mean_in_domain(mu)) domain_fail(fam, "mean outside domain");
  if (!(phi > 0.0) || !(w > 0.0))
    domain_fail(fam, "dispersion and weight must be positive");
  if (auto fixed = fam.fixed_dispersion(); fixed && phi != *fixed)
    domain_fail(fam, "dispersion is fixed at " + std::to_string(*fixed));
  switch (fam.kind()) {
    case FamilyKind::Normal:
      return mu + std::sqrt(phi / w) * rng::normal01(eng);
    case FamilyKind::Poisson:
      return static_cast<double>(poisson_draw(eng, w * mu)) / w;
    case FamilyKind::Gamma: {
      double shape = w / phi;
      return gamma_draw(eng, shape) * (mu / shape);
    }
    case FamilyKind::InverseGaussian:
      return inverse_gaussian_draw(eng, mu, w / phi);
  }
  return 0.0;
}

}  // namespace cred
