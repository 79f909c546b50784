#pragma once

// Standard errors for beta-hat.
//
// SEE1 plugs the fitted (beta, g) into the efficient score
//   l*_i = int {x_i - xbar(t)} {-g'(t)} dM_i(t),
//   M_i(t) = delta_i I(e_i <= t) - int_a^t I(e_i >= s) exp{g(s)} ds,
// and inverts the empirical information P_n l*^{(x)2}.
// SEE2 takes the beta block of the inverse of the full observed information
// -n H(theta-hat), so the spline coefficients count as estimated parameters.

#include <vector>

#include "aft_sieve/fitter.hpp"

namespace aft {

/// At-risk average of covariates: sum_j x_j I(e_j >= t) / sum_j I(e_j >= t).
VectorXd xbar(const Dataset& data, const VectorXd& beta, double t);

/// Precomputed step function t -> xbar(t) together with the fitted log-hazard.
class EfficientScoreParts {
 public:
  EfficientScoreParts(const Dataset& data, const SieveModel& model);

  /// xbar at t, using the stored residual ordering.
  VectorXd xbar_at(double t) const;
  const SieveModel& model() const { return model_; }
  /// Sorted distinct residuals (jump points of xbar).
  const std::vector<double>& jumps() const { return jumps_; }

  /// Efficient score of one observation (need not be part of the dataset).
  VectorXd efficient_score(const Observation& obs) const;

 private:
  // sum over segments (p_{k-1}, p_k] up to `upper` of xbar_k (E(p_k) - E(p_{k-1})),
  // E(s) = exp{g(s)}, segments starting at a
  VectorXd weighted_xbar_integral(double upper) const;

  SieveModel model_;
  int d_;
  std::vector<double> jumps_;
  // at-risk sums for t in (jumps_[k-1], jumps_[k]]: rows of suffix_x_, counts in suffix_n_
  MatrixXd suffix_x_;
  std::vector<double> suffix_n_;
  // segment starts inside (a, inf): breakpoints p_0 = a < p_1 < ...; cumulative sums
  std::vector<double> seg_points_;
  MatrixXd seg_cumsum_;
};

VectorXd efficient_score_i(const Observation& obs, const EfficientScoreParts& parts);

/// n x d matrix whose rows are the efficient scores of the observations.
MatrixXd efficient_scores(const Dataset& data, const SieveModel& model);

/// P_n{l*^{(x)2}}.
MatrixXd info_efficient(const Dataset& data, const SieveModel& model);

struct InverseReport {
  MatrixXd inverse;
  double condition_number = 0.0;
  bool singular = false;
};

/// Covariance of beta-hat from the full Hessian of the averaged likelihood:
/// beta block of (-n H)^{-1}. Falls back to a ridge-stabilized inverse with a flag.
/// Indices in `held` (coefficients fixed at a bound, all >= d) are dropped first.
InverseReport observed_beta_covariance(const MatrixXd& hessian, int d, int n,
                                       const std::vector<int>& held = {});

struct VarianceReport {
  MatrixXd info_efficient;
  MatrixXd info_observed;  // d x d inverse of the beta block of (-n H)^{-1}
  VectorXd see1;
  VectorXd see2;
  double condition_efficient = 0.0;
  double condition_observed = 0.0;
  bool efficient_singular = false;
  bool observed_singular = false;
  /// max_k |sum_i l*_ik| / n, a diagnostic (not an invariant).
  double efficient_score_mean = 0.0;
};

VarianceReport compute_variance(const Dataset& data, const FitResult& fit);

}  // namespace aft
