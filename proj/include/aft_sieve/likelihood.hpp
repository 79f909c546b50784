#pragma once

// Sieve log-likelihood of the censored linear model
//
//   l(beta, gamma) = n^{-1} sum_i [ delta_i g(e_i) - int_a^{e_i} exp{g(s)} ds ],
//   e_i = y_i - x_i' beta,   g(s) = sum_j gamma_j B_j(s),
//
// with its analytic gradient and Hessian in theta = (beta, gamma). Outside the
// spline domain [a, b] the log-hazard g is continued linearly from the boundary
// value and slope; mass below a is dropped.

#include <Eigen/Core>

#include <vector>

#include "aft_sieve/quadrature.hpp"
#include "aft_sieve/spline_basis.hpp"

namespace aft {

using VectorXd = Eigen::VectorXd;
using MatrixXd = Eigen::MatrixXd;

struct Observation {
  double y = 0.0;
  int delta = 0;
  VectorXd x;
};

/// Column-major view of n right-censored observations (y_i, delta_i, x_i).
class Dataset {
 public:
  Dataset() = default;
  /// Validates finiteness, delta in {0, 1}, shape agreement and at least one event.
  Dataset(VectorXd y, Eigen::VectorXi delta, MatrixXd x);

  static Dataset from_observations(const std::vector<Observation>& obs);

  int size() const { return static_cast<int>(y_.size()); }
  int dim() const { return static_cast<int>(x_.cols()); }
  const VectorXd& y() const { return y_; }
  const Eigen::VectorXi& delta() const { return delta_; }
  const MatrixXd& x() const { return x_; }
  Observation observation(int i) const;
  int n_events() const { return delta_.sum(); }

 private:
  VectorXd y_;
  Eigen::VectorXi delta_;
  MatrixXd x_;
};

/// Rows sorted lexicographically by (y, delta, x); sums over the result do not
/// depend on the input order.
Dataset canonical_order(const Dataset& data);

/// Copy of `data` with rows selected by `index`.
Dataset subset(const Dataset& data, const std::vector<int>& index);

struct SieveModel {
  VectorXd beta;
  SplineFunctiond log_hazard;

  int n_params() const { return static_cast<int>(beta.size()) + log_hazard.basis().size(); }
  VectorXd theta() const;
  SieveModel with_theta(const VectorXd& theta) const;
};

struct LikelihoodWorkspace {
  double value = 0.0;
  VectorXd score;
  MatrixXd hessian;
};

enum class EvalLevel { value, score, hessian };

double residual(const Observation& obs, const VectorXd& beta);
VectorXd residuals(const Dataset& data, const VectorXd& beta);

/// Extended log-hazard: the spline on [a, b], linear continuation outside.
/// Row k of `out.ders` holds the k-th derivative of the extended basis.
void extended_basis(const SplineBasisd& basis, double s, int n_deriv, LocalBasis<double>& out);
double extended_log_hazard(const SplineFunctiond& g, double s);
double extended_log_hazard_deriv(const SplineFunctiond& g, double s);

/// Integration breakpoints: the knots, with each knot span (and the linear
/// continuation up to one domain width past b) cut into panels over which g
/// changes by at most `max_spread`.
std::vector<double> integration_breaks(const SplineFunctiond& g, double max_spread = 4.0);

/// Residuals further than one domain width outside [a, b] are rejected.
void check_domain(const Dataset& data, const SieveModel& model);

LikelihoodWorkspace evaluate(const Dataset& data, const SieveModel& model,
                             const QuadratureRule<double>& quad, EvalLevel level);

double log_likelihood(const Dataset& data, const SieveModel& model, const QuadratureRule<double>& quad);
VectorXd score(const Dataset& data, const SieveModel& model, const QuadratureRule<double>& quad);
MatrixXd hessian(const Dataset& data, const SieveModel& model, const QuadratureRule<double>& quad);

}  // namespace aft
