// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <optional>
#include <span>
#include <utility>

#include "cred/rng.hpp"

namespace cred {

enum class FamilyKind { Normal, Poisson, Gamma, InverseGaussian };

// Exponential dispersion family in its mean-value parameterization.
// A member is identified by the unit deviance d(y, mu) and the normalizer
// c(y, phi); the density of ED(mu, phi/w) is c(y, phi/w) exp(-w d(y,mu)/(2 phi)).
class Family {
 public:
  static Family normal();
  static Family poisson();  // dispersion fixed at 1
  static Family gamma();
  static Family inverse_gaussian();

  FamilyKind kind() const { return kind_; }
  const char* name() const;

  // Mean domain (the interior of the convex support).
  bool mean_in_domain(double mu) const;
  // Response support; the Poisson boundary y = 0 is allowed.
  bool response_in_support(double y) const;
  // Families that do not admit a free dispersion report it here.
  std::optional<double> fixed_dispersion() const;
  // Continuous families close under weighted averaging; Poisson is handled
  // through the exposure-offset convention instead.
  bool continuous() const { return kind_ != FamilyKind::Poisson; }
  // Whether c(y, phi) factorizes as d(y) e(phi) (proper dispersion model).
  bool proper_dispersion() const { return kind_ != FamilyKind::Poisson; }

  double cumulant(double theta) const;          // kappa
  double canonical_parameter(double mu) const;  // inverse of kappa'
  double mean_value(double theta) const;        // kappa'
  double variance_function(double mu) const;    // V(mu) = kappa''(theta(mu))

 private:
  explicit Family(FamilyKind kind) : kind_(kind) {}
  FamilyKind kind_;
};

struct WeightedObs {
  double y = 0.0;
  double w = 0.0;
};

// Unit deviance d(y, mu) >= 0, zero iff y == mu.
double unit_deviance(const Family& fam, double y, double mu);

// Decomposition d(y, mu) = d1(y) + d2(y, mu) with d2 affine in y and
// minimized over mu at mu = y. Returns {d1, d2}.
std::pair<double, double> deviance_parts(const Family& fam, double y,
                                         double mu);

// Log density of ED(mu, phi / w) evaluated at obs.y, including the exact
// normalizing constant. Poisson uses the count form with exposure w and
// requires phi == 1.
double log_density(const Family& fam, const WeightedObs& obs, double mu,
                   double phi);

// log c(y, phi) for proper families (Normal, Gamma, InverseGaussian), with
// phi already divided by the weight. Rejects Poisson.
double log_normalizer(const Family& fam, double y, double phi);

// Weighted average (sum w_i y_i / w+, w+). For continuous families this is
// the ED(mu, phi/w+) aggregate; for Poisson it is the count sum with total
// exposure as weight.
WeightedObs aggregate(const Family& fam, std::span<const WeightedObs> obs);

// Dispersion factor e(phi) of the proper dispersion factorization
// c(y, phi) = d(y) e(phi), constants dropped. Rejects Poisson.
double e_phi(const Family& fam, double phi);
double log_e_phi(const Family& fam, double phi);

// One draw from ED(mu, phi / w). Exact samplers; no external dependency.
double sample(const Family& fam, double mu, double phi, double w,
              rng::Engine& eng);

}  // namespace cred
