// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cred/posterior.hpp"

namespace cred {

// Premium estimators that minimize expected deviance against the posterior
// predictive distribution: the class premiums are G^{-1}(X beta_star) where
// beta_star refits the GLM with E[Y] in place of the observed responses.

struct EntropicFit {
  Eigen::VectorXd beta_star;
  Eigen::VectorXd ey;  // posterior predictive mean per class
  GlmFit fit;          // IRLS metadata of the refit
};

class EntropicRefitError : public std::runtime_error {
 public:
  EntropicRefitError(const std::string& what, Eigen::VectorXd ey_in)
      : std::runtime_error(what), ey(std::move(ey_in)) {}
  Eigen::VectorXd ey;
};

EntropicFit entropic_beta(const GlmSpec& spec, const PosteriorDraws& draws);

Eigen::VectorXd entropic_premium(const GlmSpec& spec,
                                 const Eigen::VectorXd& beta_star);

struct Interval {
  double lo = 1e-6;
  double hi = 1000.0;
};

// Raised when a dispersion objective is minimized at an interval endpoint,
// which signals a bad search interval rather than an interior optimum.
class DispersionEndpointError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dispersion for proper families: minimize
//   R3(phi) = -sum_i log e(phi / w_i) + E[D] / (2 phi)
// over the interval. expected_deviance estimates E[D(Y, mu_star)].
double dispersion_proper(const Family& fam, const Eigen::VectorXd& weights,
                         double expected_deviance, Interval interval);

// General Monte Carlo path: minimize the replicate average
//   R_N(phi) = -(1/N) sum_i log C(y^i, phi) + (1/(2 phi N)) sum_i D(y^i, mu_star)
// where C is the exact product normalizer across classes.
double dispersion_general(const GlmSpec& spec,
                          const std::vector<Eigen::VectorXd>& replicates,
                          const Eigen::VectorXd& mu_star, Interval interval);

// The general-path objective at one phi, exposed for stability diagnostics.
double rn_objective(const GlmSpec& spec,
                    const std::vector<Eigen::VectorXd>& replicates,
                    const Eigen::VectorXd& mu_star, double phi);

// Convergence diagnostic: max over the phi grid of the gap between the
// objective on the first half of `replicates` and on all of it.
double rn_stability(const GlmSpec& spec,
                    const std::vector<Eigen::VectorXd>& replicates,
                    const Eigen::VectorXd& mu_star,
                    const std::vector<double>& phi_grid);

}  // namespace cred
