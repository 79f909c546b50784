#pragma once

// Joint damped Newton-Raphson for the sieve maximum likelihood estimator.

#include <optional>
#include <string>
#include <vector>

#include "aft_sieve/likelihood.hpp"

namespace aft {

struct FitConfig {
  int order = 4;
  int n_interior_knots = 1;
  KnotPlacement placement = KnotPlacement::equal_spaced;
  double tol = 1e-5;
  int max_iter = 200;
  int step_halving_max = 30;
  double ridge_eps = 1e-8;
  int quad_points = 10;
  double gamma_bound = 50.0;
  /// Domain [a, b] extends the initial residual range by this fraction on each side.
  double domain_margin = 0.15;

  void validate() const;
};

struct FitResult {
  SieveModel model;
  double loglik = 0.0;
  int n_iter = 0;
  bool converged = false;
  double grad_norm = 0.0;
  VectorXd score_at_opt{};
  MatrixXd hessian_at_opt{};
  /// Fraction of residuals at the optimum outside [a, b].
  double extrapolation_fraction = 0.0;
  bool extrapolation_flag = false;
  int gamma_clip_count = 0;
  /// Parameter indices (into theta) held at +-gamma_bound with the score pointing outward.
  std::vector<int> at_bound{};
  int ridge_count = 0;
  /// Accepted log-likelihood after each iteration, starting with the initial value.
  std::vector<double> loglik_trace{};
  std::vector<std::string> warnings{};
};

struct InitialEstimate {
  VectorXd beta;
  double log_hazard_level = 0.0;
  bool fallback = false;
};

/// OLS (with intercept, then dropped) of y on x over uncensored rows and the
/// exponential-hazard level log(sum delta / sum (e_i - a)).
InitialEstimate initial_estimate(const Dataset& data, double lower);
VectorXd initial_beta(const Dataset& data, bool* fallback = nullptr);

/// Spline basis on [a, b] from the residuals at beta with the configured margin and knots.
SplineBasisd make_basis(const VectorXd& residuals, const FitConfig& config);

FitResult fit(const Dataset& data, const FitConfig& config,
              const std::optional<SplineBasisd>& seed_basis = std::nullopt);

/// Newton iterations from an explicit starting model; `data` is used as given.
FitResult fit_from(const Dataset& data, const SieveModel& start, const FitConfig& config);

/// Maximizes over the spline coefficients only, holding beta at start.beta.
FitResult fit_log_hazard(const Dataset& data, const SieveModel& start, const FitConfig& config);

}  // namespace aft
