// Apache License, Version 2.0, refer to LICENSE.txt
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "cred/posterior.hpp"
#include "doctest.h"

using namespace cred;

namespace {

GlmSpec one_class_normal() {
  GlmSpec spec;
  spec.family = Family::normal();
  spec.link = Link::Identity;
  spec.design = Eigen::MatrixXd::Ones(1, 1);
  spec.weights = Eigen::VectorXd::Constant(1, 4.0);
  return spec;
}

PriorSpec normal_prior_fixed_phi() {
  PriorSpec prior;
  prior.coef = {{CoefPrior::Kind::Normal, 0.0, 1.0}};
  prior.dispersion = {DispersionPrior::Kind::Fixed, 1.0, 0.0};
  return prior;
}

double sample_sd(const std::vector<Eigen::MatrixXd>& chains, int col) {
  double n = 0.0, mean = 0.0, m2 = 0.0;
  for (const auto& c : chains)
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
      n += 1.0;
      double d = c(r, col) - mean;
      mean += d / n;
      m2 += d * (c(r, col) - mean);
    }
  return std::sqrt(m2 / (n - 1.0));
}

double sample_mean(const std::vector<Eigen::MatrixXd>& chains, int col) {
  double n = 0.0, s = 0.0;
  for (const auto& c : chains) {
    s += c.col(col).sum();
    n += static_cast<double>(c.rows());
  }
  return s / n;
}

}  // namespace

TEST_CASE("prior validation") {
  PriorSpec prior;
  prior.coef = {{CoefPrior::Kind::UniformBox, -20.0, 20.0}};
  prior.dispersion = {DispersionPrior::Kind::UniformBox, 0.0, 1000.0};
  CHECK_NOTHROW(prior.validate(Family::gamma(), 1));
  CHECK_THROWS_AS(prior.validate(Family::gamma(), 2), std::invalid_argument);
  // Poisson fixes phi = 1: free or mismatched fixed dispersions are invalid.
  CHECK_THROWS_AS(prior.validate(Family::poisson(), 1), std::invalid_argument);
  PriorSpec fixed2 = prior;
  fixed2.dispersion = {DispersionPrior::Kind::Fixed, 2.0, 0.0};
  CHECK_THROWS_AS(fixed2.validate(Family::poisson(), 1),
                  std::invalid_argument);
  PriorSpec fixed1 = prior;
  fixed1.dispersion = {DispersionPrior::Kind::Fixed, 1.0, 0.0};
  CHECK_NOTHROW(fixed1.validate(Family::poisson(), 1));
  PriorSpec flipped = prior;
  flipped.coef = {{CoefPrior::Kind::UniformBox, 3.0, -3.0}};
  CHECK_THROWS_AS(flipped.validate(Family::gamma(), 1),
                  std::invalid_argument);
}

TEST_CASE("log prior and log posterior support") {
  PriorSpec prior;
  prior.coef = {{CoefPrior::Kind::UniformBox, -1.0, 1.0}};
  prior.dispersion = {DispersionPrior::Kind::UniformBox, 0.0, 10.0};

  Eigen::VectorXd in(1), out(1);
  in << 0.5;
  out << 1.5;
  CHECK(prior.log_prior(in, 1.0) ==
        doctest::Approx(-std::log(2.0) - std::log(10.0)));
  CHECK(prior.log_prior(out, 1.0) ==
        -std::numeric_limits<double>::infinity());
  CHECK(prior.log_prior(in, 11.0) ==
        -std::numeric_limits<double>::infinity());

  GlmSpec spec;
  spec.family = Family::gamma();
  spec.link = Link::Identity;
  spec.design = Eigen::MatrixXd::Ones(1, 1);
  spec.weights = Eigen::VectorXd::Ones(1);
  Eigen::VectorXd y(1);
  y << 2.0;
  PriorSpec wide;
  wide.coef = {{CoefPrior::Kind::UniformBox, -20.0, 20.0}};
  wide.dispersion = {DispersionPrior::Kind::UniformBox, 0.0, 100.0};

  Eigen::VectorXd beta(1);
  beta << 1.5;
  double lp = log_posterior(spec, wide, y, beta, 0.7);
  CHECK(std::isfinite(lp));
  CHECK(lp == doctest::Approx(log_likelihood(spec, y, beta, 0.7) +
                              wide.log_prior(beta, 0.7)));

  // Identity link can push the gamma mean out of its domain: -inf, not NaN.
  beta << -1.0;
  double bad = log_posterior(spec, wide, y, beta, 0.7);
  CHECK(bad == -std::numeric_limits<double>::infinity());
  CHECK_FALSE(std::isnan(bad));
}

TEST_CASE("metropolis_chain recovers a bivariate normal target") {
  // Correlated 2-d normal: mean (1, -2), sd (1, 2), corr 0.6.
  const double rho = 0.6;
  auto target = [&](const Eigen::VectorXd& x) {
    double a = (x[0] - 1.0) / 1.0;
    double b = (x[1] + 2.0) / 2.0;
    return -(a * a - 2.0 * rho * a * b + b * b) / (2.0 * (1.0 - rho * rho));
  };
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(2);
  double accept = 0.0;
  Eigen::MatrixXd chain = metropolis_chain(target, x0, 4000, 60000, 7, 0.3,
                                           &accept);
  REQUIRE(chain.rows() == 60000);
  REQUIRE(chain.cols() == 2);
  CHECK(accept == doctest::Approx(0.3).epsilon(0.25));
  CHECK(chain.col(0).mean() == doctest::Approx(1.0).epsilon(0.05));
  CHECK(chain.col(1).mean() == doctest::Approx(-2.0).epsilon(0.05));
  double v0 = (chain.col(0).array() - chain.col(0).mean()).square().mean();
  double v1 = (chain.col(1).array() - chain.col(1).mean()).square().mean();
  double c01 = ((chain.col(0).array() - chain.col(0).mean()) *
                (chain.col(1).array() - chain.col(1).mean()))
                   .mean();
  CHECK(std::sqrt(v0) == doctest::Approx(1.0).epsilon(0.08));
  CHECK(std::sqrt(v1) == doctest::Approx(2.0).epsilon(0.08));
  CHECK(c01 / std::sqrt(v0 * v1) == doctest::Approx(rho).epsilon(0.1));
}

TEST_CASE("metropolis_chain matches quadrature cell probabilities") {
  // One-dimensional gamma(shape 3, rate 2) target; compare the histogram of
  // a long chain with exact cell probabilities.
  auto target = [](const Eigen::VectorXd& x) {
    if (x[0] <= 0.0) return -std::numeric_limits<double>::infinity();
    return 2.0 * std::log(x[0]) - 2.0 * x[0];
  };
  Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, 1.5);
  Eigen::MatrixXd chain =
      metropolis_chain(target, x0, 3000, 200000, 11, 0.44, nullptr);

  const int nbins = 24;
  const double lo = 0.0, hi = 6.0;
  std::vector<double> freq(nbins + 1, 0.0);
  for (Eigen::Index r = 0; r < chain.rows(); ++r) {
    double v = chain(r, 0);
    int b = v >= hi ? nbins : static_cast<int>((v - lo) / (hi - lo) * nbins);
    freq[b] += 1.0;
  }
  // Simpson quadrature of the normalized density over each cell.
  auto dens = [](double x) { return x <= 0.0 ? 0.0 : x * x * std::exp(-2.0 * x) * 4.0; };
  double tv = 0.0, tail = 1.0;
  for (int b = 0; b < nbins; ++b) {
    double a = lo + (hi - lo) * b / nbins;
    double c = lo + (hi - lo) * (b + 1) / nbins;
    double p = 0.0;
    const int steps = 200;
    double h = (c - a) / steps;
    for (int i = 0; i <= steps; ++i) {
      double w = (i == 0 || i == steps) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      p += w * dens(a + i * h);
    }
    p *= h / 3.0;
    tail -= p;
    tv += std::fabs(freq[b] / chain.rows() - p);
  }
  tv += std::fabs(freq[nbins] / chain.rows() - std::max(tail, 0.0));
  CHECK(0.5 * tv < 0.03);
}

TEST_CASE("metropolis_chain is deterministic in the seed") {
  auto target = [](const Eigen::VectorXd& x) { return -0.5 * x.squaredNorm(); };
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(3);
  Eigen::MatrixXd a = metropolis_chain(target, x0, 500, 1000, 42, 0.3, nullptr);
  Eigen::MatrixXd b = metropolis_chain(target, x0, 500, 1000, 42, 0.3, nullptr);
  Eigen::MatrixXd c = metropolis_chain(target, x0, 500, 1000, 43, 0.3, nullptr);
  CHECK((a - b).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((a - c).lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("run_mcmc reproduces the conjugate normal posterior") {
  // One class, ybar = 2 with weight 4, phi = 1, prior beta ~ N(0, 1).
  // Exact posterior: N(8/5, 1/5).
  GlmSpec spec = one_class_normal();
  PriorSpec prior = normal_prior_fixed_phi();
  Eigen::VectorXd y(1);
  y << 2.0;
  McmcConfig cfg;
  cfg.chains = 3;
  cfg.warmup = 1500;
  cfg.kept = 12000;
  cfg.seed = 5;
  PosteriorDraws draws = run_mcmc(spec, prior, y, cfg);

  REQUIRE(draws.chains.size() == 3);
  REQUIRE(draws.chains[0].rows() == 12000);
  REQUIRE(draws.n_params() == 2);

  double mean = sample_mean(draws.chains, 0);
  double sd = sample_sd(draws.chains, 0);
  double ess = draws.ess[0];
  REQUIRE(ess > 100.0);
  double se = sd / std::sqrt(ess);
  CHECK(std::fabs(mean - 1.6) < 4.0 * se);
  CHECK(sd == doctest::Approx(std::sqrt(0.2)).epsilon(0.1));
  CHECK(draws.rhat[0] < 1.05);

  SUBCASE("fixed dispersion shows up as a constant last column") {
    for (const auto& chain : draws.chains) {
      CHECK(chain.col(1).minCoeff() == 1.0);
      CHECK(chain.col(1).maxCoeff() == 1.0);
    }
    CHECK(draws.rhat[1] == doctest::Approx(1.0));
  }
  SUBCASE("acceptance rates are sane") {
    for (double a : draws.acceptance_rates) {
      CHECK(a > 0.05);
      CHECK(a < 0.8);
    }
  }
}

TEST_CASE("run_mcmc is bitwise deterministic and thread invariant") {
  GlmSpec spec = one_class_normal();
  PriorSpec prior = normal_prior_fixed_phi();
  Eigen::VectorXd y(1);
  y << 2.0;
  McmcConfig cfg;
  cfg.chains = 2;
  cfg.warmup = 200;
  cfg.kept = 500;
  cfg.seed = 9;
  PosteriorDraws a = run_mcmc(spec, prior, y, cfg);
  PosteriorDraws b = run_mcmc(spec, prior, y, cfg);
  REQUIRE(a.chains.size() == b.chains.size());
  for (size_t c = 0; c < a.chains.size(); ++c)
    CHECK((a.chains[c] - b.chains[c]).lpNorm<Eigen::Infinity>() == 0.0);

  cfg.seed = 10;
  PosteriorDraws c = run_mcmc(spec, prior, y, cfg);
  CHECK((a.chains[0] - c.chains[0]).lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("run_mcmc fails loudly when the prior excludes the model") {
  // Identity-link gamma with a negative coefficient box: every mean is
  // negative, the posterior is -inf everywhere in the prior.
  GlmSpec spec;
  spec.family = Family::gamma();
  spec.link = Link::Identity;
  spec.design = Eigen::MatrixXd::Ones(1, 1);
  spec.weights = Eigen::VectorXd::Ones(1);
  Eigen::VectorXd y(1);
  y << 1.0;
  PriorSpec prior;
  prior.coef = {{CoefPrior::Kind::UniformBox, -2.0, -1.0}};
  prior.dispersion = {DispersionPrior::Kind::UniformBox, 0.0, 10.0};
  McmcConfig cfg;
  cfg.chains = 1;
  cfg.warmup = 10;
  cfg.kept = 10;
  CHECK_THROWS_AS((void)run_mcmc(spec, prior, y, cfg), SamplerInitError);
}

TEST_CASE("diagnostics on synthetic chains") {
  rng::Engine eng(77);
  auto iid_chain = [&](int n, double mean) {
    Eigen::MatrixXd c(n, 1);
    for (int i = 0; i < n; ++i) c(i, 0) = mean + rng::normal01(eng);
    return c;
  };

  SUBCASE("iid chains pass") {
    std::vector<Eigen::MatrixXd> chains = {iid_chain(5000, 0.0),
                                           iid_chain(5000, 0.0),
                                           iid_chain(5000, 0.0)};
    Diagnostics d = compute_diagnostics(chains);
    CHECK(d.rhat[0] > 0.99);
    CHECK(d.rhat[0] < 1.02);
    CHECK(d.ess[0] > 0.75 * 15000);
    CHECK(d.ess[0] < 1.35 * 15000);
  }
  SUBCASE("offset chains fail R-hat") {
    std::vector<Eigen::MatrixXd> chains = {iid_chain(2000, 0.0),
                                           iid_chain(2000, 10.0)};
    Diagnostics d = compute_diagnostics(chains);
    CHECK(d.rhat[0] > 2.0);
  }
  SUBCASE("AR(1) chains lose the right amount of effective sample") {
    const double rho = 0.5;  // ESS/N = (1-rho)/(1+rho) = 1/3
    auto ar_chain = [&](int n) {
      Eigen::MatrixXd c(n, 1);
      double x = rng::normal01(eng);
      for (int i = 0; i < n; ++i) {
        x = rho * x + std::sqrt(1.0 - rho * rho) * rng::normal01(eng);
        c(i, 0) = x;
      }
      return c;
    };
    std::vector<Eigen::MatrixXd> chains = {ar_chain(20000), ar_chain(20000),
                                           ar_chain(20000), ar_chain(20000)};
    Diagnostics d = compute_diagnostics(chains);
    CHECK(d.ess[0] == doctest::Approx(80000.0 / 3.0).epsilon(0.15));
  }
  SUBCASE("constant columns are not flagged") {
    std::vector<Eigen::MatrixXd> chains = {
        Eigen::MatrixXd::Constant(500, 1, 3.0),
        Eigen::MatrixXd::Constant(500, 1, 3.0)};
    Diagnostics d = compute_diagnostics(chains);
    CHECK(d.rhat[0] == doctest::Approx(1.0));
    CHECK(d.ess[0] == doctest::Approx(1000.0));
  }
  SUBCASE("insufficient draws are rejected") {
    std::vector<Eigen::MatrixXd> one = {iid_chain(500, 0.0)};
    CHECK_THROWS_AS((void)compute_diagnostics(one), std::invalid_argument);
    std::vector<Eigen::MatrixXd> tiny = {iid_chain(50, 0.0),
                                         iid_chain(50, 0.0)};
    CHECK_THROWS_AS((void)compute_diagnostics(tiny), std::invalid_argument);
  }
}

TEST_CASE("predictive mean") {
  GlmSpec spec;
  spec.family = Family::gamma();
  spec.link = Link::Log;
  spec.design.resize(2, 2);
  spec.design << 1, 0, 1, 1;
  spec.weights = Eigen::VectorXd::Ones(2);

  SUBCASE("degenerate draws reproduce the inverse link exactly") {
    PosteriorDraws draws;
    Eigen::RowVector3d row(0.2, 0.3, 1.0);
    draws.chains = {row.colwise().replicate(200)};
    Eigen::VectorXd ey = predictive_mean(spec, draws);
    CHECK(ey[0] == doctest::Approx(std::exp(0.2)).epsilon(1e-14));
    CHECK(ey[1] == doctest::Approx(std::exp(0.5)).epsilon(1e-14));
  }
  SUBCASE("averages over all draws of all chains") {
    rng::Engine eng(3);
    std::vector<Eigen::MatrixXd> chains(3);
    for (auto& c : chains) {
      c.resize(40, 3);
      for (Eigen::Index r = 0; r < 40; ++r) {
        c(r, 0) = 0.1 * rng::normal01(eng);
        c(r, 1) = 0.2 + 0.1 * rng::normal01(eng);
        c(r, 2) = 1.0;
      }
    }
    PosteriorDraws draws;
    draws.chains = chains;
    Eigen::VectorXd ey = predictive_mean(spec, draws);
    double manual0 = 0.0, manual1 = 0.0;
    for (const auto& c : chains)
      for (Eigen::Index r = 0; r < 40; ++r) {
        manual0 += std::exp(c(r, 0));
        manual1 += std::exp(c(r, 0) + c(r, 1));
      }
    CHECK(ey[0] == doctest::Approx(manual0 / 120.0).epsilon(1e-12));
    CHECK(ey[1] == doctest::Approx(manual1 / 120.0).epsilon(1e-12));

    // Chain order is irrelevant.
    PosteriorDraws shuffled;
    shuffled.chains = {chains[2], chains[0], chains[1]};
    Eigen::VectorXd ey2 = predictive_mean(spec, shuffled);
    CHECK(ey2[0] == doctest::Approx(ey[0]).epsilon(1e-13));
    CHECK(ey2[1] == doctest::Approx(ey[1]).epsilon(1e-13));
  }
  SUBCASE("domain violations surface as range errors") {
    GlmSpec inv = spec;
    inv.link = Link::Inverse;
    PosteriorDraws draws;
    Eigen::RowVector3d row(1.0, -1.0, 1.0);  // second class: eta = 0
    draws.chains = {row.colwise().replicate(10)};
    CHECK_THROWS_AS((void)predictive_mean(inv, draws), std::range_error);
  }
}

TEST_CASE("predictive draws") {
  GlmSpec spec;
  spec.family = Family::poisson();
  spec.link = Link::Log;
  spec.design.resize(3, 1);
  spec.design << 1, 1, 1;
  spec.weights.resize(3);
  spec.weights << 2.0, 8.0, 0.0;

  PosteriorDraws draws;
  Eigen::RowVector2d row(std::log(3.0), 1.0);
  draws.chains = {row.colwise().replicate(50)};

  auto reps = predictive_draws(spec, draws, 4000, 123);
  REQUIRE(reps.size() == 4000);

  double m0 = 0.0, m1 = 0.0, v0 = 0.0, v1 = 0.0;
  for (const auto& r : reps) {
    // Poisson replicates are counts over the class exposure.
    CHECK(r[0] * 2.0 == doctest::Approx(std::round(r[0] * 2.0)));
    CHECK(r[1] * 8.0 == doctest::Approx(std::round(r[1] * 8.0)));
    // Zero-weight classes carry the conditional mean.
    CHECK(r[2] == doctest::Approx(3.0));
    m0 += r[0];
    m1 += r[1];
  }
  m0 /= reps.size();
  m1 /= reps.size();
  for (const auto& r : reps) {
    v0 += (r[0] - m0) * (r[0] - m0);
    v1 += (r[1] - m1) * (r[1] - m1);
  }
  v0 /= reps.size() - 1;
  v1 /= reps.size() - 1;
  CHECK(m0 == doctest::Approx(3.0).epsilon(0.05));
  CHECK(m1 == doctest::Approx(3.0).epsilon(0.05));
  // var = mu / w: the heavier class is four times tighter.
  CHECK(v0 == doctest::Approx(1.5).epsilon(0.15));
  CHECK(v1 == doctest::Approx(0.375).epsilon(0.15));

  SUBCASE("same seed, same replicates") {
    auto again = predictive_draws(spec, draws, 50, 123);
    for (int i = 0; i < 50; ++i)
      CHECK((again[i] - reps[i]).lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("invalid requests are rejected") {
    CHECK_THROWS_AS((void)predictive_draws(spec, draws, 0, 1),
                    std::invalid_argument);
    PosteriorDraws empty;
    CHECK_THROWS_AS((void)predictive_draws(spec, empty, 10, 1),
                    std::invalid_argument);
  }
}
