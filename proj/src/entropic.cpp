// Apache License, Version 2.0, refer to LICENSE.txt
#include "cred/entropic.hpp"

#include <cmath>

#include "cred/optimize.hpp"

namespace cred {

EntropicFit entropic_beta(const GlmSpec& spec, const PosteriorDraws& draws) {
  EntropicFit out;
  out.ey = predictive_mean(spec, draws);
  try {
    out.fit = fit_irls(spec, out.ey);
  } catch (const IrlsError& e) {
    throw EntropicRefitError(
        std::string("refit against the predictive mean failed: ") + e.what(),
        out.ey);
  }
  out.beta_star = out.fit.beta;
  return out;
}

Eigen::VectorXd entropic_premium(const GlmSpec& spec,
                                 const Eigen::VectorXd& beta_star) {
  return inverse_link_map(spec, linear_predictor(spec, beta_star));
}

namespace {

// Shared minimizer wrapper: interior minimum or DispersionEndpointError.
template <class F>
double minimize_dispersion(F&& objective, Interval interval,
                           const char* label) {
  if (!(interval.lo > 0.0) || !(interval.lo < interval.hi))
    throw std::invalid_argument(std::string(label) +
                                ": need 0 < lo < hi search interval");
  const double rel_tol = 1e-8;
  const double abs_tol = 1e-12;
  MinimizeResult res =
      brent_minimize(objective, interval.lo, interval.hi, rel_tol, abs_tol);
  double tol_x = rel_tol * std::fabs(res.x) + abs_tol;
  if (res.x - interval.lo <= 8.0 * tol_x || interval.hi - res.x <= 8.0 * tol_x)
    throw DispersionEndpointError(
        std::string(label) +
        ": minimum lies at the search interval boundary; widen the interval");
  // First-order sanity check by central differences.
  double h = 1e-4 * res.x;
  double deriv = (objective(res.x + h) - objective(res.x - h)) / (2.0 * h);
  double scale = (std::fabs(res.fx) + 1.0) / res.x;
  if (std::fabs(deriv) > 1e-2 * scale)
    throw std::runtime_error(std::string(label) +
                             ": minimizer failed the stationarity check");
  return res.x;
}

}  // namespace

double dispersion_proper(const Family& fam, const Eigen::VectorXd& weights,
                         double expected_deviance, Interval interval) {
  if (!fam.proper_dispersion())
    throw std::invalid_argument(std::string(fam.name()) +
                                ": dispersion path needs a proper family");
  if (!(expected_deviance >= 0.0) || !std::isfinite(expected_deviance))
    throw std::invalid_argument(
        "dispersion_proper: expected deviance must be nonnegative");
  for (Eigen::Index i = 0; i < weights.size(); ++i)
    if (!(weights[i] > 0.0))
      throw std::invalid_argument("dispersion_proper: weights must be positive");

  auto r3 = [&](double phi) {
    double val = expected_deviance / (2.0 * phi);
    for (Eigen::Index i = 0; i < weights.size(); ++i)
      val -= log_e_phi(fam, phi / weights[i]);
    return val;
  };
  return minimize_dispersion(r3, interval, "dispersion_proper");
}

double rn_objective(const GlmSpec& spec,
                    const std::vector<Eigen::VectorXd>& replicates,
                    const Eigen::VectorXd& mu_star, double phi) {
  if (replicates.empty())
    throw std::invalid_argument("rn_objective: no replicates");
  double acc = 0.0;
  for (const auto& rep : replicates) {
    if (rep.size() != spec.m())
      throw std::invalid_argument("rn_objective: replicate length mismatch");
    double log_c = 0.0;
    for (Eigen::Index i = 0; i < spec.m(); ++i) {
      if (spec.weights[i] == 0.0) continue;
      log_c += log_normalizer(spec.family, rep[i], phi / spec.weights[i]);
    }
    acc += -log_c + total_deviance(spec, rep, mu_star) / (2.0 * phi);
  }
  return acc / static_cast<double>(replicates.size());
}

double dispersion_general(const GlmSpec& spec,
                          const std::vector<Eigen::VectorXd>& replicates,
                          const Eigen::VectorXd& mu_star, Interval interval) {
  if (replicates.size() < 100)
    throw std::invalid_argument(
        "dispersion_general: at least 100 replicates required");
  if (!spec.family.proper_dispersion())
    throw std::invalid_argument(std::string(spec.family.name()) +
                                ": dispersion path needs a free dispersion");
  if (mu_star.size() != spec.m())
    throw std::invalid_argument("dispersion_general: mu_star length mismatch");

  // The deviance part does not depend on phi; cache its replicate average so
  // the inner minimization only re-evaluates the normalizer sum.
  double mean_dev = 0.0;
  for (const auto& rep : replicates) {
    if (rep.size() != spec.m())
      throw std::invalid_argument(
          "dispersion_general: replicate length mismatch");
    mean_dev += total_deviance(spec, rep, mu_star);
  }
  mean_dev /= static_cast<double>(replicates.size());

  auto rn = [&](double phi) {
    double log_c_sum = 0.0;
    for (const auto& rep : replicates)
      for (Eigen::Index i = 0; i < spec.m(); ++i) {
        if (spec.weights[i] == 0.0) continue;
        log_c_sum += log_normalizer(spec.family, rep[i], phi / spec.weights[i]);
      }
    return -log_c_sum / static_cast<double>(replicates.size()) +
           mean_dev / (2.0 * phi);
  };
  return minimize_dispersion(rn, interval, "dispersion_general");
}

double rn_stability(const GlmSpec& spec,
                    const std::vector<Eigen::VectorXd>& replicates,
                    const Eigen::VectorXd& mu_star,
                    const std::vector<double>& phi_grid) {
  if (replicates.size() < 2)
    throw std::invalid_argument("rn_stability: need at least two replicates");
  if (phi_grid.empty())
    throw std::invalid_argument("rn_stability: empty phi grid");
  std::vector<Eigen::VectorXd> head(replicates.begin(),
                                    replicates.begin() + replicates.size() / 2);
  double worst = 0.0;
  for (double phi : phi_grid) {
    double gap = std::fabs(rn_objective(spec, head, mu_star, phi) -
                           rn_objective(spec, replicates, mu_star, phi));
    worst = std::max(worst, gap);
  }
  return worst;
}

}  // namespace cred
