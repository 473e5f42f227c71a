// Apache License, Version 2.0, refer to LICENSE.txt
#include "cred/glm.hpp"

#include <cmath>
#include <limits>

namespace cred {

const char* link_name(Link link) {
  switch (link) {
    case Link::Log: return "log";
    case Link::Identity: return "identity";
    case Link::Inverse: return "inverse";
  }
  return "?";
}

Link link_from_name(const std::string& name) {
  if (name == "log") return Link::Log;
  if (name == "identity") return Link::Identity;
  if (name == "inverse") return Link::Inverse;
  throw std::invalid_argument("unknown link: " + name);
}

Link default_link(const Family& fam) {
  return fam.kind() == FamilyKind::Normal ? Link::Identity : Link::Log;
}

double link_value(Link link, double mu) {
  switch (link) {
    case Link::Log: return std::log(mu);
    case Link::Identity: return mu;
    case Link::Inverse: return 1.0 / mu;
  }
  return 0.0;
}

double link_deriv(Link link, double mu) {
  switch (link) {
    case Link::Log: return 1.0 / mu;
    case Link::Identity: return 1.0;
    case Link::Inverse: return -1.0 / (mu * mu);
  }
  return 0.0;
}

void GlmSpec::validate() const {
  if (design.rows() == 0 || design.cols() == 0)
    throw std::invalid_argument("design matrix is empty");
  if (weights.size() != design.rows())
    throw std::invalid_argument("weights length does not match design rows");
  if (design.cols() > design.rows())
    throw std::invalid_argument("more coefficients than classes");
  if (!design.allFinite() || !weights.allFinite())
    throw std::invalid_argument("design or weights contain non-finite values");
  Eigen::Index positive = 0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0)
      throw std::invalid_argument("weights must be nonnegative");
    if (weights[i] > 0.0) ++positive;
  }
  if (positive < design.cols())
    throw std::invalid_argument(
        "need at least as many positively weighted classes as coefficients");
  if (!class_labels.empty() &&
      static_cast<Eigen::Index>(class_labels.size()) != design.rows())
    throw std::invalid_argument("class_labels length does not match design");
}

Eigen::VectorXd linear_predictor(const GlmSpec& spec,
                                 const Eigen::VectorXd& beta) {
  if (beta.size() != spec.n_coef())
    throw std::invalid_argument("beta length does not match design columns");
  return spec.design * beta;
}

bool try_inverse_link(const GlmSpec& spec, const Eigen::VectorXd& eta,
                      Eigen::VectorXd& mu) {
  mu.resize(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    double m;
    switch (spec.link) {
      case Link::Log: m = std::exp(eta[i]); break;
      case Link::Identity: m = eta[i]; break;
      case Link::Inverse: m = 1.0 / eta[i]; break;
      default: m = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(m) || !spec.family.mean_in_domain(m)) return false;
    mu[i] = m;
  }
  return true;
}

Eigen::VectorXd inverse_link_map(const GlmSpec& spec,
                                 const Eigen::VectorXd& eta) {
  Eigen::VectorXd mu;
  if (!try_inverse_link(spec, eta, mu))
    throw std::range_error(
        std::string("linear predictor maps outside the mean domain of ") +
        spec.family.name());
  return mu;
}

double total_deviance(const GlmSpec& spec, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& mu) {
  if (y.size() != spec.m() || mu.size() != spec.m())
    throw std::invalid_argument("response/mean length does not match design");
  double dev = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (spec.weights[i] == 0.0) continue;
    dev += spec.weights[i] * unit_deviance(spec.family, y[i], mu[i]);
  }
  return dev;
}

Eigen::VectorXd deviance_gradient(const GlmSpec& spec, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& beta) {
  Eigen::VectorXd mu = inverse_link_map(spec, linear_predictor(spec, beta));
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(spec.n_coef());
  for (Eigen::Index i = 0; i < spec.m(); ++i) {
    if (spec.weights[i] == 0.0) continue;
    // d d(y,mu)/d mu = 2 (mu - y) / V(mu); chain through dmu/deta.
    double dmu_deta = 1.0 / link_deriv(spec.link, mu[i]);
    double dd_dmu =
        2.0 * (mu[i] - y[i]) / spec.family.variance_function(mu[i]);
    grad += spec.weights[i] * dd_dmu * dmu_deta * spec.design.row(i).transpose();
  }
  return grad;
}

namespace {

// Starting means: the response nudged off support boundaries and link
// singularities.
Eigen::VectorXd initial_means(const GlmSpec& spec, const Eigen::VectorXd& y) {
  Eigen::VectorXd mu = y;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (spec.family.kind() == FamilyKind::Poisson)
      mu[i] = y[i] + 0.1;
    if ((spec.link == Link::Log || spec.link == Link::Inverse ||
         !spec.family.mean_in_domain(mu[i])) &&
        mu[i] <= 0.0)
      mu[i] = 0.1;
  }
  return mu;
}

void check_response(const GlmSpec& spec, const Eigen::VectorXd& y) {
  if (y.size() != spec.m())
    throw std::invalid_argument("response length does not match design rows");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i]))
      throw std::invalid_argument("response contains non-finite values");
    if (spec.weights[i] > 0.0 && !spec.family.response_in_support(y[i]))
      throw std::domain_error(std::string(spec.family.name()) +
                              ": response outside support in class " +
                              std::to_string(i));
  }
}

}  // namespace

GlmFit fit_irls(const GlmSpec& spec, const Eigen::VectorXd& y) {
  spec.validate();
  check_response(spec, y);

  const Eigen::Index m = spec.m();
  const Eigen::Index k = spec.n_coef();

  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(spec.design);
    if (qr.rank() < k)
      throw std::invalid_argument("design matrix is rank deficient");
  }

  Eigen::VectorXd mu = initial_means(spec, y);
  Eigen::VectorXd eta(m);
  for (Eigen::Index i = 0; i < m; ++i) eta[i] = link_value(spec.link, mu[i]);

  GlmFit fit;
  fit.beta = Eigen::VectorXd::Zero(k);
  double dev = total_deviance(spec, y, mu);
  bool have_beta = false;

  const int max_iter = 50;
  const int max_halvings = 10;
  const double tol = 1e-10;

  for (int iter = 1; iter <= max_iter; ++iter) {
    fit.iterations = iter;
    // Working response and weights at the current mean.
    Eigen::VectorXd sqw(m), z(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      double gp = link_deriv(spec.link, mu[i]);
      double v = spec.family.variance_function(mu[i]);
      double wk = spec.weights[i] / (v * gp * gp);
      sqw[i] = std::sqrt(std::max(wk, 0.0));
      z[i] = eta[i] + (y[i] - mu[i]) * gp;
    }
    Eigen::MatrixXd a = sqw.asDiagonal() * spec.design;
    Eigen::VectorXd beta_next =
        a.colPivHouseholderQr().solve(sqw.cwiseProduct(z));

    // Step halving keeps the deviance monotone.
    double step = 1.0;
    bool accepted = false;
    double dev_next = dev;
    Eigen::VectorXd beta_try, eta_try, mu_try;
    for (int h = 0; h <= max_halvings; ++h) {
      beta_try = have_beta ? (fit.beta + step * (beta_next - fit.beta)).eval()
                           : beta_next;
      eta_try = spec.design * beta_try;
      Eigen::VectorXd mu_cand;
      if (try_inverse_link(spec, eta_try, mu_cand)) {
        dev_next = total_deviance(spec, y, mu_cand);
        // The starting means are not a model fit, so the first solve is
        // accepted whenever it is valid; later steps must not increase D.
        if (std::isfinite(dev_next) &&
            (!have_beta || dev_next <= dev + tol * (1.0 + std::fabs(dev)))) {
          mu_try = mu_cand;
          accepted = true;
          break;
        }
      }
      if (!have_beta) break;  // nothing to blend toward on the first step
      step *= 0.5;
    }
    if (!accepted) {
      fit.mu = mu;
      fit.deviance = dev;
      fit.converged = false;
      throw IrlsError("IRLS failed to decrease the deviance", fit);
    }

    fit.beta = beta_try;
    eta = eta_try;
    mu = mu_try;
    have_beta = true;
    double change = std::fabs(dev - dev_next);
    dev = dev_next;
    if (change <= tol * (1.0 + std::fabs(dev))) {
      fit.converged = true;
      break;
    }
  }

  fit.mu = mu;
  fit.deviance = dev;
  if (!fit.converged) {
    throw IrlsError("IRLS did not converge within 50 iterations", fit);
  }
  Eigen::Index p = k - 1;
  fit.phi_deviance = m > p
                         ? phi_deviance_estimate(fit.deviance, m, p)
                         : std::numeric_limits<double>::quiet_NaN();
  return fit;
}

double phi_deviance_estimate(double deviance, Eigen::Index m, Eigen::Index p) {
  if (deviance < 0.0 || !std::isfinite(deviance))
    throw std::invalid_argument("deviance must be finite and nonnegative");
  // p counts the non-intercept coefficients: p = design columns - 1.
  if (m <= p)
    throw std::invalid_argument(
        "dispersion estimator undefined: m must exceed p");
  return deviance / static_cast<double>(m - p);
}

double phi_deviance_estimate(const GlmFit& fit, Eigen::Index m,
                             Eigen::Index p) {
  return phi_deviance_estimate(fit.deviance, m, p);
}

}  // namespace cred
