#include "aft_sieve/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace aft {

Dataset::Dataset(VectorXd y, Eigen::VectorXi delta, MatrixXd x)
    : y_(std::move(y)), delta_(std::move(delta)), x_(std::move(x)) {
  if (y_.size() == 0) throw DataError("dataset: no observations");
  if (delta_.size() != y_.size() || x_.rows() != y_.size()) {
    throw DataError("dataset: y, delta and x disagree on the number of observations");
  }
  if (x_.cols() < 1) throw DataError("dataset: need at least one covariate");
  for (int i = 0; i < y_.size(); ++i) {
    if (!std::isfinite(y_(i))) throw DataError("dataset: non-finite y at row " + std::to_string(i));
    if (delta_(i) != 0 && delta_(i) != 1) {
      throw DataError("dataset: status must be 0 or 1 at row " + std::to_string(i));
    }
    if (!x_.row(i).allFinite()) {
      throw DataError("dataset: non-finite covariate at row " + std::to_string(i));
    }
  }
  if (delta_.sum() == 0) throw DataError("dataset: no observed events");
}

Dataset Dataset::from_observations(const std::vector<Observation>& obs) {
  if (obs.empty()) throw DataError("dataset: no observations");
  const auto d = obs.front().x.size();
  VectorXd y(obs.size());
  Eigen::VectorXi delta(obs.size());
  MatrixXd x(obs.size(), d);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs[i].x.size() != d) {
      throw DataError("dataset: covariate dimension mismatch at row " + std::to_string(i));
    }
    const auto r = static_cast<Eigen::Index>(i);
    y(r) = obs[i].y;
    delta(r) = obs[i].delta;
    x.row(r) = obs[i].x.transpose();
  }
  return Dataset(std::move(y), std::move(delta), std::move(x));
}

Observation Dataset::observation(int i) const {
  return Observation{y_(i), delta_(i), x_.row(i).transpose()};
}

Dataset subset(const Dataset& data, const std::vector<int>& index) {
  VectorXd y(index.size());
  Eigen::VectorXi delta(index.size());
  MatrixXd x(index.size(), data.dim());
  for (std::size_t k = 0; k < index.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    y(r) = data.y()(index[k]);
    delta(r) = data.delta()(index[k]);
    x.row(r) = data.x().row(index[k]);
  }
  return Dataset(std::move(y), std::move(delta), std::move(x));
}

Dataset canonical_order(const Dataset& data) {
  std::vector<int> index(static_cast<std::size_t>(data.size()));
  std::iota(index.begin(), index.end(), 0);
  const auto& y = data.y();
  const auto& delta = data.delta();
  const auto& x = data.x();
  std::sort(index.begin(), index.end(), [&](int a, int b) {
    if (y(a) != y(b)) return y(a) < y(b);
    if (delta(a) != delta(b)) return delta(a) < delta(b);
    for (int k = 0; k < x.cols(); ++k) {
      if (x(a, k) != x(b, k)) return x(a, k) < x(b, k);
    }
    return false;
  });
  return subset(data, index);
}

VectorXd SieveModel::theta() const {
  VectorXd out(n_params());
  out << beta, log_hazard.coefficients();
  return out;
}

SieveModel SieveModel::with_theta(const VectorXd& theta) const {
  const auto d = beta.size();
  if (theta.size() != n_params()) throw InvalidArgument("sieve model: parameter length mismatch");
  return SieveModel{theta.head(d), SplineFunctiond(log_hazard.basis(), theta.tail(theta.size() - d))};
}

double residual(const Observation& obs, const VectorXd& beta) {
  if (obs.x.size() != beta.size()) throw InvalidArgument("residual: dimension mismatch between x and beta");
  return obs.y - obs.x.dot(beta);
}

VectorXd residuals(const Dataset& data, const VectorXd& beta) {
  if (data.dim() != beta.size()) throw InvalidArgument("residuals: dimension mismatch between x and beta");
  return data.y() - data.x() * beta;
}

void extended_basis(const SplineBasisd& basis, double s, int n_deriv, LocalBasis<double>& out) {
  const int deg = basis.order() - 1;
  const double a = basis.lower();
  const double b = basis.upper();
  if (s >= a && s <= b) {
    if (n_deriv <= deg) {
      basis.eval_local(s, n_deriv, out);
      return;
    }
    LocalBasis<double> inner;
    basis.eval_local(s, deg, inner);
    out.first = inner.first;
    out.ders.setZero(n_deriv + 1, basis.order());
    out.ders.topRows(deg + 1) = inner.ders;
    return;
  }
  const double edge = s < a ? a : b;
  LocalBasis<double> at_edge;
  basis.eval_local(edge, std::min(1, deg), at_edge);
  out.first = at_edge.first;
  out.ders.setZero(n_deriv + 1, basis.order());
  out.ders.row(0) = at_edge.ders.row(0);
  if (deg >= 1) {
    out.ders.row(0) += (s - edge) * at_edge.ders.row(1);
    if (n_deriv >= 1) out.ders.row(1) = at_edge.ders.row(1);
  }
}

namespace {

double local_dot(const LocalBasis<double>& local, int row, const VectorXd& coef) {
  return local.ders.row(row).dot(coef.segment(local.first, local.ders.cols()));
}

}  // namespace

double extended_log_hazard(const SplineFunctiond& g, double s) {
  LocalBasis<double> local;
  extended_basis(g.basis(), s, 0, local);
  return local_dot(local, 0, g.coefficients());
}

double extended_log_hazard_deriv(const SplineFunctiond& g, double s) {
  LocalBasis<double> local;
  extended_basis(g.basis(), s, 1, local);
  return local_dot(local, 1, g.coefficients());
}

std::vector<double> integration_breaks(const SplineFunctiond& g, double max_spread) {
  const SplineBasisd& basis = g.basis();
  const VectorXd& gamma = g.coefficients();
  const std::vector<double> knots = basis.knots().breakpoints();
  const int p = basis.order();
  std::vector<double> out;
  out.push_back(knots.front());
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    // g on a knot span lies within the range of its p coefficients
    const auto local = gamma.segment(static_cast<Eigen::Index>(k), p);
    const double spread = local.maxCoeff() - local.minCoeff();
    const int panels = std::clamp(static_cast<int>(std::ceil(spread / max_spread)), 1, 256);
    const double lo = knots[k];
    const double hi = knots[k + 1];
    for (int j = 1; j < panels; ++j) out.push_back(lo + (hi - lo) * j / panels);
    out.push_back(hi);
  }
  // beyond b the continuation is linear; residuals reach at most one width further
  const double b = basis.upper();
  const double width = b - basis.lower();
  const double slope = std::abs(extended_log_hazard_deriv(g, b));
  const int panels = std::clamp(static_cast<int>(std::ceil(slope * width / max_spread)), 1, 256);
  for (int j = 1; j <= panels; ++j) out.push_back(b + width * j / panels);
  return out;
}

void check_domain(const Dataset& data, const SieveModel& model) {
  const double a = model.log_hazard.basis().lower();
  const double b = model.log_hazard.basis().upper();
  const double width = b - a;
  const VectorXd eps = residuals(data, model.beta);
  for (int i = 0; i < eps.size(); ++i) {
    if (!std::isfinite(eps(i)) || eps(i) < a - width || eps(i) > b + width) {
      throw DomainError("likelihood: residual of observation " + std::to_string(i) +
                        " lies outside the extended domain");
    }
  }
}

LikelihoodWorkspace evaluate(const Dataset& data, const SieveModel& model,
                             const QuadratureRule<double>& quad, EvalLevel level) {
  const SplineBasisd& basis = model.log_hazard.basis();
  const VectorXd& gamma = model.log_hazard.coefficients();
  const int d = data.dim();
  const int q = basis.size();
  const int p = basis.order();
  if (model.beta.size() != d) throw InvalidArgument("likelihood: beta dimension does not match data");
  if (level == EvalLevel::hessian && p < 3) {
    throw InvalidArgument("likelihood: Hessian needs spline order >= 3");
  }
  check_domain(data, model);

  const bool want_score = level != EvalLevel::value;
  const bool want_hessian = level == EvalLevel::hessian;
  const int n_deriv = want_hessian ? 2 : (want_score ? 1 : 0);
  const double a = basis.lower();
  const std::vector<double> breaks = integration_breaks(model.log_hazard);

  LikelihoodWorkspace ws;
  ws.score = VectorXd::Zero(want_score ? d + q : 0);
  ws.hessian = MatrixXd::Zero(want_hessian ? d + q : 0, want_hessian ? d + q : 0);

  double value = 0.0;
  LocalBasis<double> at_eps;
  LocalBasis<double> at_node;
  VectorXd int_phi(q);
  MatrixXd int_phiphi(q, q);

  for (int i = 0; i < data.size(); ++i) {
    const double eps = data.y()(i) - data.x().row(i).dot(model.beta);
    const int delta = data.delta()(i);

    extended_basis(basis, eps, n_deriv, at_eps);
    const double g = local_dot(at_eps, 0, gamma);

    // int_a^eps exp{g(s)} (1, phi(s), phi(s) phi(s)') ds on shared nodes
    double int_exp = 0.0;
    if (want_score) int_phi.setZero();
    if (want_hessian) int_phiphi.setZero();
    for_each_node<double>(breaks, quad, a, eps, [&](double s, double w) {
      extended_basis(basis, s, 0, at_node);
      const auto phi = at_node.ders.row(0);
      const double weight = w * std::exp(phi.dot(gamma.segment(at_node.first, p)));
      int_exp += weight;
      if (want_score) int_phi.segment(at_node.first, p) += weight * phi.transpose();
      if (want_hessian) {
        int_phiphi.block(at_node.first, at_node.first, p, p) += weight * phi.transpose() * phi;
      }
    });

    value += delta * g - int_exp;
    if (!want_score) continue;

    const double g1 = local_dot(at_eps, 1, gamma);
    const double exp_g = eps > a ? std::exp(g) : 0.0;
    const auto xi = data.x().row(i).transpose();

    ws.score.head(d) += xi * (exp_g - delta * g1);
    ws.score.segment(d + at_eps.first, p) += delta * at_eps.ders.row(0).transpose();
    ws.score.tail(q) -= int_phi;

    if (!want_hessian) continue;
    const double g2 = local_dot(at_eps, 2, gamma);
    ws.hessian.topLeftCorner(d, d) -= (exp_g * g1 - delta * g2) * xi * xi.transpose();
    const Eigen::RowVectorXd cross = exp_g * at_eps.ders.row(0) - delta * at_eps.ders.row(1);
    ws.hessian.block(0, d + at_eps.first, d, p) += xi * cross;
    ws.hessian.bottomRightCorner(q, q) -= int_phiphi;
  }

  const double inv_n = 1.0 / data.size();
  ws.value = value * inv_n;
  if (!std::isfinite(ws.value)) throw NumericalError("likelihood: non-finite log-likelihood");
  if (want_score) ws.score *= inv_n;
  if (want_hessian) {
    ws.hessian *= inv_n;
    ws.hessian.triangularView<Eigen::StrictlyLower>() = ws.hessian.transpose();
  }
  return ws;
}

double log_likelihood(const Dataset& data, const SieveModel& model, const QuadratureRule<double>& quad) {
  return evaluate(data, model, quad, EvalLevel::value).value;
}

VectorXd score(const Dataset& data, const SieveModel& model, const QuadratureRule<double>& quad) {
  return evaluate(data, model, quad, EvalLevel::score).score;
}

MatrixXd hessian(const Dataset& data, const SieveModel& model, const QuadratureRule<double>& quad) {
  return evaluate(data, model, quad, EvalLevel::hessian).hessian;
}

}  // namespace aft
