// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "cred/edf.hpp"

namespace cred {

enum class Link { Log, Identity, Inverse };

const char* link_name(Link link);
Link link_from_name(const std::string& name);
// Conventional default: identity for normal, log otherwise.
Link default_link(const Family& fam);

double link_value(Link link, double mu);   // g(mu)
double link_deriv(Link link, double mu);   // g'(mu)

// A fitted-form GLM problem: response distribution, link, design matrix and
// per-class weights. Rows are risk classes, columns are coefficients
// (intercept included as a design column).
struct GlmSpec {
  Family family = Family::gamma();
  Link link = Link::Log;
  Eigen::MatrixXd design;    // m x (p+1)
  Eigen::VectorXd weights;   // m, nonnegative
  std::vector<std::string> class_labels;  // optional, size m when present

  Eigen::Index m() const { return design.rows(); }
  Eigen::Index n_coef() const { return design.cols(); }
  void validate() const;  // shape/weight checks; throws std::invalid_argument
};

Eigen::VectorXd linear_predictor(const GlmSpec& spec,
                                 const Eigen::VectorXd& beta);

// G^{-1} applied componentwise with domain guards. The non-throwing variant
// reports failure instead, for use inside posterior evaluations.
bool try_inverse_link(const GlmSpec& spec, const Eigen::VectorXd& eta,
                      Eigen::VectorXd& mu);
Eigen::VectorXd inverse_link_map(const GlmSpec& spec,
                                 const Eigen::VectorXd& eta);

// D(y, mu) = sum_i w_i d(y_i, mu_i). Zero-weight classes are skipped.
double total_deviance(const GlmSpec& spec, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& mu);

// Gradient of D(y, G^{-1}(X beta)) with respect to beta.
Eigen::VectorXd deviance_gradient(const GlmSpec& spec, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& beta);

struct GlmFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd mu;
  double deviance = 0.0;
  double phi_deviance = 0.0;  // D / (m - p), NaN when undefined
  int iterations = 0;
  bool converged = false;
};

// Raised when IRLS runs out of iterations or step halvings; carries the last
// iterate so callers can inspect how far the fit got.
class IrlsError : public std::runtime_error {
 public:
  IrlsError(const std::string& what, GlmFit last)
      : std::runtime_error(what), last_fit(std::move(last)) {}
  GlmFit last_fit;
};

// Deviance-minimizing fit by iteratively reweighted least squares with step
// halving. Requires a full-rank design.
GlmFit fit_irls(const GlmSpec& spec, const Eigen::VectorXd& y);

// Deviance dispersion estimator D / (m - p) with p = design columns - 1.
double phi_deviance_estimate(double deviance, Eigen::Index m, Eigen::Index p);
double phi_deviance_estimate(const GlmFit& fit, Eigen::Index m,
                             Eigen::Index p);

}  // namespace cred
