#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>
#include <random>

#include "aft_sieve/fitter.hpp"
#include "test_support.hpp"

using namespace aft;
using aft::testing::random_dataset;

TEST_CASE("starting beta is the least-squares slope on uncensored rows") {
  SUBCASE("exact linear data") {
    const int n = 8;
    MatrixXd x(n, 2);
    VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = i % 3;
      x(i, 1) = 0.5 * i - 1.0 + (i % 2);
      y(i) = 1.0 + 2.0 * x(i, 0) - x(i, 1);
    }
    const Dataset data(y, Eigen::VectorXi::Ones(n), x);
    bool fallback = true;
    const VectorXd b = initial_beta(data, &fallback);
    CHECK_FALSE(fallback);
    CHECK(b(0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(b(1) == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("normal equations on twelve observations, censored rows ignored") {
    const Dataset data = random_dataset(12, 2, 5);
    std::vector<int> events;
    for (int i = 0; i < data.size(); ++i)
      if (data.delta()(i) == 1) events.push_back(i);
    const auto m = static_cast<Eigen::Index>(events.size());
    MatrixXd z(m, 3);
    VectorXd r(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      const int i = events[static_cast<std::size_t>(k)];
      z(k, 0) = 1.0;
      z(k, 1) = data.x()(i, 0);
      z(k, 2) = data.x()(i, 1);
      r(k) = data.y()(i);
    }
    const VectorXd normal = (z.transpose() * z).ldlt().solve(z.transpose() * r);
    const VectorXd b = initial_beta(data);
    CHECK(std::abs(b(0) - normal(1)) <= 1e-10);
    CHECK(std::abs(b(1) - normal(2)) <= 1e-10);
  }
  SUBCASE("too few events falls back to zero") {
    const Dataset data(VectorXd::LinSpaced(4, 0.0, 3.0), (Eigen::VectorXi(4) << 1, 0, 0, 1).finished(),
                       MatrixXd::Random(4, 2));
    bool fallback = false;
    CHECK(initial_beta(data, &fallback).isZero());
    CHECK(fallback);
  }
}

TEST_CASE("starting log-hazard level is the exponential rate") {
  // y = 3 + 2x on events, so every OLS residual equals 3; exposure above a = 1 is 4 * 2
  const Dataset data((VectorXd(4) << 3.0, 5.0, 7.0, 9.0).finished(), Eigen::VectorXi::Ones(4),
                     (MatrixXd(4, 1) << 0.0, 1.0, 2.0, 3.0).finished());
  const InitialEstimate init = initial_estimate(data, 1.0);
  CHECK(init.beta(0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(init.log_hazard_level == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  CHECK_THROWS_AS(initial_estimate(data, 5.0), NumericalError);
}

TEST_CASE("Newton ascent is monotone and stops at a stationary point") {
  const FitConfig config;
  for (unsigned seed = 1; seed <= 6; ++seed) {
    const Dataset data = random_dataset(80, 2, seed, seed % 2 == 0);
    const FitResult f = fit(data, config);
    REQUIRE(f.converged);
    CHECK(f.grad_norm <= config.tol);
    for (std::size_t k = 1; k < f.loglik_trace.size(); ++k) CHECK(f.loglik_trace[k] >= f.loglik_trace[k - 1]);
    CHECK(f.loglik == f.loglik_trace.back());
    const int q = f.model.log_hazard.basis().size();
    const Eigen::SelfAdjointEigenSolver<MatrixXd> es(f.hessian_at_opt.bottomRightCorner(q, q));
    CHECK(es.eigenvalues().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("row order does not affect the fit") {
  const Dataset data = random_dataset(60, 2, 17);
  std::vector<int> perm(static_cast<std::size_t>(data.size()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937(3));
  const FitResult a = fit(data, FitConfig{});
  const FitResult b = fit(subset(data, perm), FitConfig{});
  CHECK(a.model.beta == b.model.beta);
  CHECK(a.model.log_hazard.coefficients() == b.model.log_hazard.coefficients());
  CHECK(a.loglik == b.loglik);
}

TEST_CASE("shifting and rescaling the response") {
  const Dataset data = random_dataset(70, 2, 3, true);
  const FitResult base = fit(data, FitConfig{});
  REQUIRE(base.converged);
  // equivariance holds exactly only while no coefficient sits at the bound
  REQUIRE(base.at_bound.empty());

  SUBCASE("a shift of y leaves beta and the likelihood unchanged") {
    const Dataset shifted(data.y().array() + 4.0, data.delta(), data.x());
    const FitResult f = fit(shifted, FitConfig{});
    CHECK((f.model.beta - base.model.beta).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(f.loglik == doctest::Approx(base.loglik).epsilon(1e-9));
  }
  SUBCASE("a scale of y scales beta and shifts the likelihood by the log-Jacobian") {
    const double s = 2.5;
    const Dataset scaled(s * data.y(), data.delta(), data.x());
    const FitResult f = fit(scaled, FitConfig{});
    CHECK((f.model.beta - s * base.model.beta).cwiseAbs().maxCoeff() <= 1e-6);
    const double jac = std::log(s) * data.n_events() / data.size();
    CHECK(f.loglik == doctest::Approx(base.loglik - jac).epsilon(1e-9));
  }
}

TEST_CASE("Newton optimum agrees with a derivative-free search") {
  const Dataset data = canonical_order(random_dataset(12, 1, 29));
  FitConfig config;
  config.n_interior_knots = 0;  // q = 4
  const FitResult f = fit(data, config);
  REQUIRE(f.converged);
  REQUIRE(f.model.log_hazard.basis().size() == 4);
  const auto quad = gauss_legendre(config.quad_points);
  auto objective = [&](const VectorXd& theta) {
    // same feasible region as the fitter: bounded coefficients, no residual below the domain
    if (theta.tail(4).cwiseAbs().maxCoeff() > config.gamma_bound) return -std::numeric_limits<double>::infinity();
    if (residuals(data, theta.head(1)).minCoeff() < f.model.log_hazard.basis().lower())
      return -std::numeric_limits<double>::infinity();
    try {
      return log_likelihood(data, f.model.with_theta(theta), quad);
    } catch (const Error&) {
      return -std::numeric_limits<double>::infinity();
    }
  };
  // coarse grid over beta with a flat log-hazard, then simplex from the best cell
  VectorXd best = f.model.theta();
  double best_val = -std::numeric_limits<double>::infinity();
  for (double b = -1.0; b <= 3.0; b += 0.1) {
    for (double c = -3.0; c <= 1.0; c += 0.25) {
      VectorXd t(5);
      t << b, c, c, c, c;
      const double v = objective(t);
      if (v > best_val) {
        best_val = v;
        best = t;
      }
    }
  }
  const VectorXd nm = testing::nelder_mead_max(objective, best, 0.5);
  CHECK(std::abs(objective(nm) - f.loglik) <= 1e-4);
  CHECK(f.loglik >= objective(nm) - 1e-9);
}

TEST_CASE("doubling the quadrature points barely moves the optimum") {
  const Dataset data = random_dataset(100, 2, 31);
  FitConfig ten;
  FitConfig twenty;
  twenty.quad_points = 20;
  const FitResult a = fit(data, ten);
  const FitResult b = fit(data, twenty);
  CHECK(std::abs(a.loglik - b.loglik) <= 1e-8);
  CHECK((a.model.beta - b.model.beta).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("coefficients driven past the bound are held there") {
  // a domain reaching far below every residual has exposure but no events,
  // so the first coefficient wants to go to minus infinity
  const Dataset data = canonical_order(random_dataset(60, 1, 37));
  FitConfig config;
  config.gamma_bound = 8.0;
  const VectorXd eps = residuals(data, initial_beta(data));
  const SplineBasisd basis = testing::basis_on(eps.minCoeff() - 30.0, eps.maxCoeff() + 0.5, 1);
  const FitResult f = fit(data, config, basis);
  CHECK(f.converged);
  REQUIRE(f.at_bound.size() >= 1);
  CHECK(f.at_bound.front() == 1);
  CHECK(f.model.log_hazard.coefficients()(0) == -8.0);
  CHECK(f.model.log_hazard.within_bound(8.0));
  CHECK(f.score_at_opt(1) < 0.0);
  CHECK_FALSE(f.warnings.empty());
}

TEST_CASE("log-hazard-only fit holds beta") {
  const Dataset data = canonical_order(random_dataset(50, 2, 41));
  const FitResult full = fit(data, FitConfig{});
  SieveModel start = full.model;
  start.beta(0) += 0.3;
  const FitResult prof = fit_log_hazard(data, start, FitConfig{});
  CHECK(prof.model.beta == start.beta);
  CHECK(prof.converged);
  const int q = start.log_hazard.basis().size();
  CHECK(prof.score_at_opt.tail(q).cwiseAbs().maxCoeff() <= 1e-5);
  CHECK(prof.loglik < full.loglik);
}

TEST_CASE("a narrow domain flags extrapolation") {
  const Dataset data = canonical_order(random_dataset(60, 1, 43));
  const VectorXd eps = residuals(data, initial_beta(data));
  const double lo = eps.minCoeff();
  const double hi = eps.maxCoeff();
  const SplineBasisd narrow = testing::basis_on(lo - 0.1, lo + 0.7 * (hi - lo), 1);
  const FitResult f = fit(data, FitConfig{}, narrow);
  CHECK(f.extrapolation_fraction > 0.01);
  CHECK(f.extrapolation_flag);
}

TEST_CASE("configuration checks") {
  const Dataset data = random_dataset(20, 1, 47);
  auto with = [](auto mutate) {
    FitConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(fit(data, with([](FitConfig& c) { c.order = 2; })), InvalidArgument);
  CHECK_THROWS_AS(fit(data, with([](FitConfig& c) { c.tol = 0.0; })), InvalidArgument);
  CHECK_THROWS_AS(fit(data, with([](FitConfig& c) { c.max_iter = 0; })), InvalidArgument);
  CHECK_THROWS_AS(fit(data, with([](FitConfig& c) { c.quad_points = 0; })), InvalidArgument);
  CHECK_THROWS_AS(fit(data, with([](FitConfig& c) { c.n_interior_knots = -2; })), InvalidArgument);
  CHECK_THROWS_AS(fit(data, with([](FitConfig& c) { c.gamma_bound = -1.0; })), InvalidArgument);
  CHECK_THROWS_AS(fit(data, with([](FitConfig& c) { c.domain_margin = -0.1; })), InvalidArgument);
}

TEST_CASE("domain covers the starting residuals with the configured margin") {
  const VectorXd eps = (VectorXd(3) << -1.0, 0.0, 3.0).finished();
  FitConfig config;
  config.domain_margin = 0.25;
  const SplineBasisd b = make_basis(eps, config);
  CHECK(b.lower() == doctest::Approx(-2.0));
  CHECK(b.upper() == doctest::Approx(4.0));
  CHECK(b.size() == config.n_interior_knots + config.order);
}
