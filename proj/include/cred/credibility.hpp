// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Dense>
#include <utility>

namespace cred {

// Conjugate prior in natural-parameter form: density proportional to
// exp(n0 [x0 theta - kappa(theta)]). n0 acts as a prior sample size and x0
// as the prior mean of Y.
struct JewellPrior {
  double n0 = 1.0;
  double x0 = 1.0;
};

struct CredibilityBlend {
  double z = 0.0;        // credibility factor in [0, 1]
  double premium = 0.0;  // (1 - z) x0 + z ybar
};

// Linear credibility premium after n exposures with sample mean ybar:
// z = n / (phi n0 + n). With n = 0 the premium is the prior mean and ybar
// is ignored.
CredibilityBlend jewell_premium(const JewellPrior& prior, double phi, double n,
                                double ybar);

struct ConjugateParams {
  double n0 = 0.0;
  Eigen::VectorXd x0;
};

// One conjugate Bayes step per class: n0' = n0 + 1/phi,
// x0' = (ybar + phi n0 x0) / (phi n0 + 1).
ConjugateParams conjugate_update(double n0, const Eigen::VectorXd& x0,
                                 double phi, const Eigen::VectorXd& ybar);

// Two risk classes, design rows (0) and (1) under a log link, premiums
// blended per class with factors z1, z2. Checks whether some (z1, z2, beta)
// reproduces the model premiums; the target for class one is fixed at 1.
struct Type2Result {
  bool feasible = false;
  double z1 = 0.0;
  double z2 = 0.0;
  double beta = 0.0;
};

Type2Result type2_feasible_2class(std::pair<double, double> ybar,
                                  std::pair<double, double> manual);

}  // namespace cred
