// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "cred/glm.hpp"

namespace cred {

// Independent priors over the regression coefficients and the dispersion.
struct CoefPrior {
  enum class Kind { UniformBox, Normal } kind = Kind::UniformBox;
  double a = -20.0;  // lower bound, or mean
  double b = 20.0;   // upper bound, or standard deviation
};

struct DispersionPrior {
  enum class Kind { UniformBox, Fixed } kind = Kind::UniformBox;
  double a = 0.0;     // lower bound, or the fixed value
  double b = 1000.0;  // upper bound (unused when fixed)
};

struct PriorSpec {
  std::vector<CoefPrior> coef;
  DispersionPrior dispersion;

  // Shape/support checks against a concrete model; throws on violations
  // such as a free dispersion for Poisson.
  void validate(const Family& fam, Eigen::Index n_coef) const;
  double log_prior(const Eigen::VectorXd& beta, double phi) const;
};

struct McmcConfig {
  int chains = 3;
  int warmup = 2000;
  int kept = 28000;
  std::uint64_t seed = 1;
  double target_accept = 0.234;
};

// Posterior sample of (beta, phi). Each chain is a kept x (p+2) matrix whose
// last column is phi (constant when the dispersion is fixed).
struct PosteriorDraws {
  std::vector<Eigen::MatrixXd> chains;
  int warmup = 0;
  std::uint64_t seed = 0;
  std::vector<double> acceptance_rates;  // kept phase, per chain
  Eigen::VectorXd rhat;  // empty when diagnostics are unavailable
  Eigen::VectorXd ess;

  Eigen::Index n_params() const {
    return chains.empty() ? 0 : chains.front().cols();
  }
  Eigen::Index total_draws() const;
};

class SamplerInitError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unnormalized log posterior of (beta, phi); -inf outside the prior or mean
// domain, never NaN.
double log_posterior(const GlmSpec& spec, const PriorSpec& prior,
                     const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                     double phi);

// Model log likelihood alone (sum of class log densities at dispersion phi).
double log_likelihood(const GlmSpec& spec, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& beta, double phi);

using LogTargetFn = std::function<double(const Eigen::VectorXd&)>;

// Adaptive random-walk Metropolis on an arbitrary target. The proposal is
// multivariate normal; its covariance tracks the running sample covariance
// scaled by 2.38^2/dim (plus jitter), with a global log-scale steered toward
// target_accept. All adaptation stops when the warmup phase ends.
Eigen::MatrixXd metropolis_chain(const LogTargetFn& target,
                                 const Eigen::VectorXd& x0, int warmup,
                                 int kept, std::uint64_t seed,
                                 double target_accept, double* accept_rate);

// Full sampler: beta initialized from IRLS, phi from the deviance estimator
// (both clipped into the prior support), phi sampled on the log scale.
// Chains run on independent substreams of config.seed and may execute in
// parallel; results do not depend on thread count.
PosteriorDraws run_mcmc(const GlmSpec& spec, const PriorSpec& prior,
                        const Eigen::VectorXd& y, const McmcConfig& config);

struct Diagnostics {
  Eigen::VectorXd rhat;
  Eigen::VectorXd ess;
};

// Split-R-hat and autocorrelation ESS per parameter. Requires at least two
// chains of at least 100 kept draws each.
Diagnostics compute_diagnostics(const std::vector<Eigen::MatrixXd>& chains);

// Posterior predictive mean E[Y] = average of G^{-1}(X beta) over all draws.
Eigen::VectorXd predictive_mean(const GlmSpec& spec,
                                const PosteriorDraws& draws);

// n_rep posterior predictive replicates of the class response vector. Each
// replicate picks one posterior draw and samples every class from
// ED(mu_i, phi/w_i). Replicates use independent substreams of seed, so the
// output is independent of parallel scheduling.
std::vector<Eigen::VectorXd> predictive_draws(const GlmSpec& spec,
                                              const PosteriorDraws& draws,
                                              int n_rep, std::uint64_t seed);

}  // namespace cred
