// Apache License, Version 2.0, refer to LICENSE.txt
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "cred/glm.hpp"
#include "doctest.h"

using namespace cred;

namespace {

GlmSpec make_spec(const Family& fam, Link link, const Eigen::MatrixXd& x,
                  const Eigen::VectorXd& w) {
  GlmSpec spec;
  spec.family = fam;
  spec.link = link;
  spec.design = x;
  spec.weights = w;
  return spec;
}

// A small gamma/log problem with a smooth truth.
GlmSpec toy_gamma(Eigen::VectorXd& y) {
  Eigen::MatrixXd x(6, 2);
  x << 1, 0, 1, 0.5, 1, 1, 1, 1.5, 1, 2, 1, 2.5;
  Eigen::VectorXd w(6);
  w << 2, 1, 3, 1, 2, 1;
  y.resize(6);
  for (int i = 0; i < 6; ++i) y[i] = std::exp(0.3 + 0.4 * x(i, 1)) * (1.0 + 0.05 * ((i % 3) - 1));
  return make_spec(Family::gamma(), Link::Log, x, w);
}

}  // namespace

TEST_CASE("link functions and names") {
  CHECK(link_value(Link::Log, 2.0) == doctest::Approx(std::log(2.0)));
  CHECK(link_value(Link::Identity, 2.0) == 2.0);
  CHECK(link_value(Link::Inverse, 2.0) == doctest::Approx(0.5));
  CHECK(link_deriv(Link::Log, 2.0) == doctest::Approx(0.5));
  CHECK(link_deriv(Link::Identity, 2.0) == 1.0);
  CHECK(link_deriv(Link::Inverse, 2.0) == doctest::Approx(-0.25));
  for (Link l : {Link::Log, Link::Identity, Link::Inverse})
    CHECK(link_from_name(link_name(l)) == l);
  CHECK_THROWS_AS((void)link_from_name("cauchit"), std::invalid_argument);
  CHECK(default_link(Family::normal()) == Link::Identity);
  CHECK(default_link(Family::gamma()) == Link::Log);
  CHECK(default_link(Family::poisson()) == Link::Log);
}

TEST_CASE("inverse link maps with domain guards") {
  Eigen::VectorXd y;
  GlmSpec spec = toy_gamma(y);
  Eigen::VectorXd eta(6);
  eta << -1, 0, 1, 2, 3, 4;
  Eigen::VectorXd mu = inverse_link_map(spec, eta);
  for (int i = 0; i < 6; ++i) CHECK(mu[i] == doctest::Approx(std::exp(eta[i])));

  GlmSpec inv = spec;
  inv.link = Link::Inverse;
  Eigen::VectorXd bad(6);
  bad << 1, 1, 1, 0, 1, 1;  // 1/0 leaves the gamma mean domain
  Eigen::VectorXd out;
  CHECK_FALSE(try_inverse_link(inv, bad, out));
  CHECK_THROWS_AS((void)inverse_link_map(inv, bad), std::range_error);
}

TEST_CASE("normal identity IRLS equals weighted least squares") {
  Eigen::MatrixXd x(5, 2);
  x << 1, -1, 1, 0, 1, 1, 1, 2, 1, 4;
  Eigen::VectorXd w(5), y(5);
  w << 1, 2, 3, 1, 0.5;
  y << 0.5, 1.1, 1.8, 3.1, 5.2;
  GlmSpec spec = make_spec(Family::normal(), Link::Identity, x, w);
  GlmFit fit = fit_irls(spec, y);
  Eigen::MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
  Eigen::VectorXd beta_wls = xtwx.ldlt().solve(x.transpose() * (w.array() * y.array()).matrix());
  CHECK(fit.converged);
  CHECK((fit.beta - beta_wls).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("intercept-only log-link fits the weighted mean") {
  for (const Family& fam : {Family::poisson(), Family::gamma(),
                            Family::inverse_gaussian()}) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 1);
    Eigen::VectorXd w(4), y(4);
    w << 1, 2, 1, 4;
    y << 1.0, 3.0, 2.5, 0.75;
    GlmSpec spec = make_spec(fam, Link::Log, x, w);
    GlmFit fit = fit_irls(spec, y);
    double wmean = (w.array() * y.array()).sum() / w.sum();
    CHECK(fit.converged);
    CHECK(fit.beta[0] == doctest::Approx(std::log(wmean)).epsilon(1e-9));
  }
  // The classic two-count check: counts 1 and 3 on unit exposures.
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 1);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(2), y(2);
  y << 1.0, 3.0;
  GlmFit fit = fit_irls(make_spec(Family::poisson(), Link::Log, x, w), y);
  CHECK(fit.beta[0] == doctest::Approx(std::log(2.0)).epsilon(1e-10));
}

TEST_CASE("saturated design reproduces the responses exactly") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Identity(4, 4);
  Eigen::VectorXd w(4), y(4);
  w << 1, 2, 3, 4;
  y << 0.5, 1.5, 2.0, 3.0;
  GlmSpec spec = make_spec(Family::gamma(), Link::Log, x, w);
  GlmFit fit = fit_irls(spec, y);
  CHECK(fit.converged);
  CHECK((fit.mu - y).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK(fit.deviance == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("fit minimizes the deviance") {
  Eigen::VectorXd y;
  GlmSpec spec = toy_gamma(y);
  GlmFit fit = fit_irls(spec, y);
  CHECK(fit.converged);

  SUBCASE("gradient vanishes at the optimum") {
    // IRLS stops on relative deviance change, so the residual gradient is
    // small but not machine zero.
    Eigen::VectorXd g = deviance_gradient(spec, y, fit.beta);
    CHECK(g.lpNorm<Eigen::Infinity>() < 1e-6);
  }
  SUBCASE("random perturbations never improve") {
    rng::Engine eng(42);
    for (int i = 0; i < 200; ++i) {
      Eigen::VectorXd delta(fit.beta.size());
      for (Eigen::Index j = 0; j < delta.size(); ++j)
        delta[j] = 0.2 * (rng::uniform01(eng) - 0.5);
      Eigen::VectorXd mu =
          inverse_link_map(spec, spec.design * (fit.beta + delta));
      CHECK(total_deviance(spec, y, mu) >= fit.deviance - 1e-10);
    }
  }
  SUBCASE("analytic gradient matches finite differences away from optimum") {
    Eigen::VectorXd beta = fit.beta;
    beta[1] += 0.3;
    Eigen::VectorXd g = deviance_gradient(spec, y, beta);
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
      Eigen::VectorXd bp = beta, bm = beta;
      bp[j] += 1e-6;
      bm[j] -= 1e-6;
      double fd = (total_deviance(spec, y, inverse_link_map(spec, spec.design * bp)) -
                   total_deviance(spec, y, inverse_link_map(spec, spec.design * bm))) /
                  2e-6;
      CHECK(g[j] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("column rescaling is absorbed by the coefficients") {
  Eigen::VectorXd y;
  GlmSpec spec = toy_gamma(y);
  GlmFit fit = fit_irls(spec, y);
  GlmSpec scaled = spec;
  scaled.design.col(1) *= 10.0;
  GlmFit fit2 = fit_irls(scaled, y);
  CHECK(fit2.beta[1] == doctest::Approx(fit.beta[1] / 10.0).epsilon(1e-8));
  CHECK((fit2.mu - fit.mu).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("zero-weight classes are ignored by the fit") {
  Eigen::VectorXd y;
  GlmSpec spec = toy_gamma(y);
  GlmFit fit = fit_irls(spec, y);
  GlmSpec padded = spec;
  padded.design.conservativeResize(7, 2);
  padded.design.row(6) << 1.0, 3.0;
  padded.weights.conservativeResize(7);
  padded.weights[6] = 0.0;
  Eigen::VectorXd y7(7);
  y7 << y, 123.0;  // arbitrary; must not matter
  GlmFit fit2 = fit_irls(padded, y7);
  CHECK((fit2.beta - fit.beta).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("rank-deficient designs are rejected") {
  Eigen::MatrixXd x(4, 3);
  x << 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8;  // col2 = 2 * col1
  Eigen::VectorXd w = Eigen::VectorXd::Ones(4);
  Eigen::VectorXd y(4);
  y << 1, 2, 3, 4;
  GlmSpec spec = make_spec(Family::normal(), Link::Identity, x, w);
  CHECK_THROWS_AS((void)fit_irls(spec, y), std::invalid_argument);
}

TEST_CASE("GlmSpec validation") {
  Eigen::VectorXd y;
  GlmSpec spec = toy_gamma(y);
  CHECK_NOTHROW(spec.validate());
  GlmSpec bad = spec;
  bad.weights[0] = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  GlmSpec shape = spec;
  shape.weights.conservativeResize(5);
  CHECK_THROWS_AS(shape.validate(), std::invalid_argument);
}

TEST_CASE("deviance dispersion estimator") {
  CHECK(phi_deviance_estimate(2.0, 2, 0) == doctest::Approx(1.0));
  CHECK(phi_deviance_estimate(4.5, 12, 3) == doctest::Approx(0.5));
  CHECK_THROWS_AS((void)phi_deviance_estimate(1.0, 3, 3),
                  std::invalid_argument);
  Eigen::VectorXd y;
  GlmSpec spec = toy_gamma(y);
  GlmFit fit = fit_irls(spec, y);
  CHECK(fit.phi_deviance ==
        doctest::Approx(fit.deviance / (spec.m() - (spec.n_coef() - 1))));
}
