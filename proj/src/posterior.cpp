// Apache License, Version 2.0, refer to LICENSE.txt
#include "cred/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cred/parallel.hpp"
#include "cred/rng.hpp"

namespace cred {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;
}  // namespace

void PriorSpec::validate(const Family& fam, Eigen::Index n_coef) const {
  if (static_cast<Eigen::Index>(coef.size()) != n_coef)
    throw std::invalid_argument("prior: one coefficient prior per column required");
  for (const auto& c : coef) {
    if (c.kind == CoefPrior::Kind::UniformBox) {
      if (!(c.a < c.b))
        throw std::invalid_argument("prior: uniform box needs lo < hi");
    } else if (!(c.b > 0.0)) {
      throw std::invalid_argument("prior: normal sd must be positive");
    }
  }
  if (dispersion.kind == DispersionPrior::Kind::UniformBox) {
    if (!(dispersion.a >= 0.0) || !(dispersion.a < dispersion.b))
      throw std::invalid_argument("prior: dispersion box needs 0 <= lo < hi");
    if (fam.fixed_dispersion())
      throw std::invalid_argument(std::string("prior: ") + fam.name() +
                                  " has fixed dispersion; use a fixed prior");
  } else {
    if (!(dispersion.a > 0.0))
      throw std::invalid_argument("prior: fixed dispersion must be positive");
    if (auto fixed = fam.fixed_dispersion(); fixed && dispersion.a != *fixed)
      throw std::invalid_argument(std::string("prior: ") + fam.name() +
                                  " requires dispersion " +
                                  std::to_string(*fixed));
  }
}

double PriorSpec::log_prior(const Eigen::VectorXd& beta, double phi) const {
  if (static_cast<Eigen::Index>(coef.size()) != beta.size())
    throw std::invalid_argument("prior/beta length mismatch");
  double lp = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const auto& c = coef[j];
    if (c.kind == CoefPrior::Kind::UniformBox) {
      if (beta[j] < c.a || beta[j] > c.b) return kNegInf;
      lp -= std::log(c.b - c.a);
    } else {
      double z = (beta[j] - c.a) / c.b;
      lp += -0.5 * z * z - std::log(c.b) - 0.5 * kLog2Pi;
    }
  }
  if (dispersion.kind == DispersionPrior::Kind::UniformBox) {
    if (!(phi > dispersion.a) || !(phi < dispersion.b)) return kNegInf;
    lp -= std::log(dispersion.b - dispersion.a);
  } else if (phi != dispersion.a) {
    return kNegInf;
  }
  return lp;
}

double log_likelihood(const GlmSpec& spec, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& beta, double phi) {
  if (y.size() != spec.m())
    throw std::invalid_argument("response length does not match design rows");
  if (!(phi > 0.0) || !std::isfinite(phi) || !beta.allFinite()) return kNegInf;
  if (auto fixed = spec.family.fixed_dispersion(); fixed && phi != *fixed)
    return kNegInf;
  Eigen::VectorXd mu;
  if (!try_inverse_link(spec, spec.design * beta, mu)) return kNegInf;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < spec.m(); ++i) {
    if (spec.weights[i] == 0.0) continue;
    ll += log_density(spec.family, {y[i], spec.weights[i]}, mu[i], phi);
  }
  return std::isnan(ll) ? kNegInf : ll;
}

double log_posterior(const GlmSpec& spec, const PriorSpec& prior,
                     const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                     double phi) {
  if (beta.size() != spec.n_coef())
    throw std::invalid_argument("beta length does not match design columns");
  if (!beta.allFinite() || !(phi > 0.0) || !std::isfinite(phi)) return kNegInf;
  double lp = prior.log_prior(beta, phi);
  if (!std::isfinite(lp)) return kNegInf;
  double ll = log_likelihood(spec, y, beta, phi);
  if (!std::isfinite(ll)) return kNegInf;
  return lp + ll;
}

Eigen::Index PosteriorDraws::total_draws() const {
  Eigen::Index n = 0;
  for (const auto& c : chains) n += c.rows();
  return n;
}

Eigen::MatrixXd metropolis_chain(const LogTargetFn& target,
                                 const Eigen::VectorXd& x0, int warmup,
                                 int kept, std::uint64_t seed,
                                 double target_accept, double* accept_rate) {
  const Eigen::Index d = x0.size();
  if (d == 0) throw std::invalid_argument("metropolis_chain: empty state");
  if (warmup < 0 || kept <= 0)
    throw std::invalid_argument("metropolis_chain: warmup >= 0, kept > 0");

  rng::Engine eng(seed);
  Eigen::VectorXd x = x0;
  double lp = target(x);
  if (!std::isfinite(lp))
    throw SamplerInitError("initial point has log target -inf");

  // Running moments for the adapting proposal covariance.
  Eigen::VectorXd mean = x;
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(d, d);
  long n_mom = 1;
  const double base_scale = 2.38 * 2.38 / static_cast<double>(d);
  double log_lambda = 0.0;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);

  auto build_chol = [&](Eigen::MatrixXd& chol) {
    Eigen::MatrixXd cov;
    if (n_mom > 2 * d + 10) {
      cov = m2 / static_cast<double>(n_mom - 1);
      cov = 0.5 * (cov + cov.transpose()).eval();
    } else {
      cov = 0.01 * eye;
    }
    Eigen::MatrixXd sigma =
        std::exp(log_lambda) * base_scale * (cov + 1e-6 * eye);
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() == Eigen::Success) {
      chol = llt.matrixL();
    } else {
      chol = sigma.diagonal().cwiseMax(1e-12).cwiseSqrt().asDiagonal();
    }
  };

  Eigen::MatrixXd chol;
  build_chol(chol);

  Eigen::MatrixXd draws(kept, d);
  long accepted_kept = 0;
  Eigen::VectorXd noise(d), prop(d);
  const long total = static_cast<long>(warmup) + kept;
  for (long t = 1; t <= total; ++t) {
    for (Eigen::Index j = 0; j < d; ++j) noise[j] = rng::normal01(eng);
    prop = x + chol * noise;
    double lp_prop = target(prop);
    double log_ratio = lp_prop - lp;
    bool accept = std::log(rng::uniform_pos(eng)) < log_ratio;
    if (accept) {
      x = prop;
      lp = lp_prop;
    }
    if (t <= warmup) {
      double alpha =
          std::isfinite(log_ratio) ? std::exp(std::min(0.0, log_ratio)) : 0.0;
      log_lambda += std::pow(static_cast<double>(t), -0.7) *
                    (alpha - target_accept);
      log_lambda = std::clamp(log_lambda, -10.0, 10.0);
      ++n_mom;
      Eigen::VectorXd delta = x - mean;
      mean += delta / static_cast<double>(n_mom);
      m2.noalias() += delta * (x - mean).transpose();
      if (t % 25 == 0 || t == warmup) build_chol(chol);
    } else {
      draws.row(t - warmup - 1) = x;
      if (accept) ++accepted_kept;
    }
  }
  if (accept_rate)
    *accept_rate = static_cast<double>(accepted_kept) / kept;
  return draws;
}

namespace {

// Clip the IRLS/deviance starting values strictly inside the prior support.
void clip_into_prior(const PriorSpec& prior, Eigen::VectorXd& beta,
                     double& phi) {
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const auto& c = prior.coef[j];
    if (c.kind != CoefPrior::Kind::UniformBox) continue;
    double margin = 1e-6 * (c.b - c.a);
    beta[j] = std::clamp(beta[j], c.a + margin, c.b - margin);
  }
  if (prior.dispersion.kind == DispersionPrior::Kind::UniformBox) {
    double lo = prior.dispersion.a, hi = prior.dispersion.b;
    double margin = 1e-6 * (hi - lo);
    if (!(phi > lo) || !(phi < hi) || !std::isfinite(phi))
      phi = std::clamp(phi, lo + margin, hi - margin);
    if (!(phi > lo)) phi = lo + margin;
  } else {
    phi = prior.dispersion.a;
  }
}

}  // namespace

PosteriorDraws run_mcmc(const GlmSpec& spec, const PriorSpec& prior,
                        const Eigen::VectorXd& y, const McmcConfig& config) {
  spec.validate();
  prior.validate(spec.family, spec.n_coef());
  if (config.chains < 1 || config.warmup < 0 || config.kept < 1)
    throw std::invalid_argument("mcmc: chains >= 1, warmup >= 0, kept >= 1");
  if (!(config.target_accept > 0.0) || !(config.target_accept < 1.0))
    throw std::invalid_argument("mcmc: target_accept in (0,1) required");

  const Eigen::Index k = spec.n_coef();
  const bool phi_free =
      prior.dispersion.kind == DispersionPrior::Kind::UniformBox;

  // Starting point: frequentist fit for beta, deviance estimator for phi.
  Eigen::VectorXd beta0 = Eigen::VectorXd::Zero(k);
  double phi0 = 1.0;
  try {
    GlmFit fit = fit_irls(spec, y);
    beta0 = fit.beta;
    if (std::isfinite(fit.phi_deviance) && fit.phi_deviance > 0.0)
      phi0 = fit.phi_deviance;
  } catch (const IrlsError& e) {
    if (e.last_fit.beta.size() == k) beta0 = e.last_fit.beta;
  }
  clip_into_prior(prior, beta0, phi0);

  auto target = [&](const Eigen::VectorXd& x) -> double {
    Eigen::VectorXd beta = x.head(k);
    if (!phi_free)
      return log_posterior(spec, prior, y, beta, prior.dispersion.a);
    double t = x[k];
    double phi = std::exp(t);
    if (!std::isfinite(phi) || !(phi > 0.0)) return kNegInf;
    // +t is the Jacobian of sampling phi on the log scale.
    return log_posterior(spec, prior, y, beta, phi) + t;
  };

  const Eigen::Index d = k + (phi_free ? 1 : 0);
  Eigen::VectorXd x0(d);
  x0.head(k) = beta0;
  if (phi_free) x0[k] = std::log(phi0);

  PosteriorDraws out;
  out.warmup = config.warmup;
  out.seed = config.seed;
  out.chains.resize(config.chains);
  out.acceptance_rates.assign(config.chains, 0.0);

  std::vector<Eigen::VectorXd> starts(config.chains);
  for (int c = 0; c < config.chains; ++c) {
    // Jittered start per chain; shrink the jitter until the target is finite.
    rng::Engine jit(rng::derive_seed(config.seed, 0x100000 + c));
    double scale = 0.01;
    bool found = false;
    for (int attempt = 0; attempt < 20 && !found; ++attempt) {
      Eigen::VectorXd cand = x0;
      for (Eigen::Index j = 0; j < d; ++j)
        cand[j] += scale * rng::normal01(jit);
      if (std::isfinite(target(cand))) {
        starts[c] = cand;
        found = true;
      }
      scale *= 0.5;
    }
    if (!found) {
      if (!std::isfinite(target(x0)))
        throw SamplerInitError(
            "no starting point with finite posterior; check priors and data");
      starts[c] = x0;
    }
  }

  std::vector<Eigen::MatrixXd> raw(config.chains);
  parallel_tasks(config.chains, [&](int c) {
    raw[c] = metropolis_chain(target, starts[c], config.warmup, config.kept,
                              rng::derive_seed(config.seed, c),
                              config.target_accept, &out.acceptance_rates[c]);
  });

  for (int c = 0; c < config.chains; ++c) {
    Eigen::MatrixXd chain(config.kept, k + 1);
    chain.leftCols(k) = raw[c].leftCols(k);
    if (phi_free)
      chain.col(k) = raw[c].col(k).array().exp();
    else
      chain.col(k).setConstant(prior.dispersion.a);
    out.chains[c] = std::move(chain);
  }

  if (config.chains >= 2 && config.kept >= 100) {
    Diagnostics diag = compute_diagnostics(out.chains);
    out.rhat = diag.rhat;
    out.ess = diag.ess;
  }
  return out;
}

Diagnostics compute_diagnostics(const std::vector<Eigen::MatrixXd>& chains) {
  if (chains.size() < 2)
    throw std::invalid_argument("diagnostics: at least two chains required");
  const Eigen::Index rows = chains.front().rows();
  const Eigen::Index cols = chains.front().cols();
  for (const auto& c : chains)
    if (c.rows() != rows || c.cols() != cols)
      throw std::invalid_argument("diagnostics: ragged chain shapes");
  if (rows < 100)
    throw std::invalid_argument("diagnostics: at least 100 draws per chain");

  const Eigen::Index half = rows / 2;
  const Eigen::Index n_seq = 2 * static_cast<Eigen::Index>(chains.size());

  Diagnostics diag;
  diag.rhat.resize(cols);
  diag.ess.resize(cols);

  for (Eigen::Index j = 0; j < cols; ++j) {
    // Split each chain in half to expose within-chain drift.
    std::vector<Eigen::VectorXd> seqs;
    seqs.reserve(n_seq);
    for (const auto& c : chains) {
      seqs.push_back(c.col(j).head(half));
      seqs.push_back(c.col(j).segment(half, half));
    }
    Eigen::VectorXd means(n_seq), vars(n_seq);
    for (Eigen::Index s = 0; s < n_seq; ++s) {
      means[s] = seqs[s].mean();
      vars[s] = (seqs[s].array() - means[s]).square().sum() /
                static_cast<double>(half - 1);
    }
    double w = vars.mean();
    double grand = means.mean();
    double b_over_n =
        (means.array() - grand).square().sum() / static_cast<double>(n_seq - 1);
    double var_plus =
        (static_cast<double>(half - 1) / half) * w + b_over_n;

    if (!(var_plus > 0.0) || !(w > 0.0)) {
      // A degenerate (constant) parameter: no sampling noise to diagnose.
      diag.rhat[j] = 1.0;
      diag.ess[j] = static_cast<double>(half * n_seq);
      continue;
    }
    diag.rhat[j] = std::sqrt(var_plus / w);

    // Autocorrelations from the multi-chain variogram, summed with Geyer's
    // initial monotone positive sequence over lag pairs.
    const Eigen::Index max_lag = std::min<Eigen::Index>(half - 1, 2000);
    auto rho_at = [&](Eigen::Index lag) {
      double vt = 0.0;
      for (const auto& s : seqs) {
        double acc = 0.0;
        for (Eigen::Index i = lag; i < half; ++i) {
          double dlt = s[i] - s[i - lag];
          acc += dlt * dlt;
        }
        vt += acc / static_cast<double>(half - lag);
      }
      vt /= static_cast<double>(n_seq);
      return 1.0 - vt / (2.0 * var_plus);
    };
    double sum_gamma = 0.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (Eigen::Index pair = 0; 2 * pair + 1 <= max_lag; ++pair) {
      double r_even = pair == 0 ? 1.0 : rho_at(2 * pair);
      double r_odd = rho_at(2 * pair + 1);
      double g = r_even + r_odd;
      if (g <= 0.0) break;
      g = std::min(g, prev_pair);
      sum_gamma += g;
      prev_pair = g;
    }
    double tau = std::max(2.0 * sum_gamma - 1.0, 1e-3);
    diag.ess[j] = static_cast<double>(half * n_seq) / tau;
  }
  return diag;
}

Eigen::VectorXd predictive_mean(const GlmSpec& spec,
                                const PosteriorDraws& draws) {
  if (draws.chains.empty())
    throw std::invalid_argument("predictive_mean: no chains");
  if (draws.n_params() != spec.n_coef() + 1)
    throw std::invalid_argument("predictive_mean: draw/design width mismatch");
  const Eigen::Index m = spec.m();
  const Eigen::Index k = spec.n_coef();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(m);
  long count = 0;
  const Eigen::Index chunk = 4096;
  for (const auto& chain : draws.chains) {
    for (Eigen::Index r0 = 0; r0 < chain.rows(); r0 += chunk) {
      Eigen::Index nr = std::min(chunk, chain.rows() - r0);
      // mus: nr x m block of per-draw means.
      Eigen::MatrixXd mus =
          chain.block(r0, 0, nr, k) * spec.design.transpose();
      switch (spec.link) {
        case Link::Log:
          mus = mus.array().exp();
          break;
        case Link::Identity:
          break;
        case Link::Inverse:
          mus = mus.array().inverse();
          break;
      }
      if (!mus.allFinite())
        throw std::range_error(
            "predictive_mean: a posterior draw maps outside the mean domain");
      if (spec.family.kind() != FamilyKind::Normal && (mus.array() <= 0.0).any())
        throw std::range_error(
            "predictive_mean: a posterior draw maps outside the mean domain");
      acc += mus.colwise().sum().transpose();
      count += nr;
    }
  }
  return acc / static_cast<double>(count);
}

std::vector<Eigen::VectorXd> predictive_draws(const GlmSpec& spec,
                                              const PosteriorDraws& draws,
                                              int n_rep, std::uint64_t seed) {
  if (n_rep < 1) throw std::invalid_argument("predictive_draws: n_rep >= 1");
  if (draws.chains.empty())
    throw std::invalid_argument("predictive_draws: no chains");
  if (draws.n_params() != spec.n_coef() + 1)
    throw std::invalid_argument("predictive_draws: draw/design width mismatch");
  const Eigen::Index total = draws.total_draws();
  if (total == 0) throw std::invalid_argument("predictive_draws: empty chains");

  std::vector<Eigen::Index> offsets;
  offsets.reserve(draws.chains.size() + 1);
  offsets.push_back(0);
  for (const auto& c : draws.chains)
    offsets.push_back(offsets.back() + c.rows());

  const Eigen::Index k = spec.n_coef();
  std::vector<Eigen::VectorXd> reps(n_rep);
  parallel_tasks(n_rep, [&](int r) {
    rng::Engine eng(rng::derive_seed(seed, static_cast<std::uint64_t>(r)));
    Eigen::Index idx =
        static_cast<Eigen::Index>(eng() % static_cast<std::uint64_t>(total));
    std::size_t c = 0;
    while (idx >= offsets[c + 1]) ++c;
    Eigen::Index row = idx - offsets[c];
    Eigen::VectorXd beta = draws.chains[c].row(row).head(k);
    double phi = draws.chains[c](row, k);
    Eigen::VectorXd mu = inverse_link_map(spec, spec.design * beta);
    Eigen::VectorXd yrep(spec.m());
    for (Eigen::Index i = 0; i < spec.m(); ++i) {
      // Zero-weight classes carry no distribution; report the mean so the
      // slot stays defined (downstream sums skip them anyway).
      yrep[i] = spec.weights[i] > 0.0
                    ? sample(spec.family, mu[i], phi, spec.weights[i], eng)
                    : mu[i];
    }
    reps[r] = std::move(yrep);
  });
  return reps;
}

}  // namespace cred
