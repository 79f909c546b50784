#include "aft_sieve/variance.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace aft {

VectorXd xbar(const Dataset& data, const VectorXd& beta, double t) {
  const VectorXd eps = residuals(data, beta);
  VectorXd sum = VectorXd::Zero(data.dim());
  int count = 0;
  for (int i = 0; i < data.size(); ++i) {
    if (eps(i) >= t) {
      sum += data.x().row(i).transpose();
      ++count;
    }
  }
  if (count == 0) throw DomainError("xbar: empty risk set");
  return sum / count;
}

EfficientScoreParts::EfficientScoreParts(const Dataset& data, const SieveModel& model)
    : model_(model), d_(data.dim()) {
  const VectorXd eps = residuals(data, model.beta);
  const int n = data.size();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return eps(i) < eps(j); });

  // distinct residuals, descending accumulation of at-risk sums
  for (int i : order) {
    if (jumps_.empty() || eps(i) > jumps_.back()) jumps_.push_back(eps(i));
  }
  const auto m = static_cast<Eigen::Index>(jumps_.size());
  suffix_x_ = MatrixXd::Zero(m, d_);
  suffix_n_.assign(jumps_.size(), 0.0);
  {
    Eigen::Index k = m - 1;
    VectorXd run_x = VectorXd::Zero(d_);
    double run_n = 0.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      while (eps(*it) < jumps_[static_cast<std::size_t>(k)]) {
        suffix_x_.row(k) = run_x.transpose();
        suffix_n_[static_cast<std::size_t>(k)] = run_n;
        --k;
      }
      run_x += data.x().row(*it).transpose();
      run_n += 1.0;
    }
    suffix_x_.row(k) = run_x.transpose();
    suffix_n_[static_cast<std::size_t>(k)] = run_n;
  }

  const double a = model.log_hazard.basis().lower();
  seg_points_.push_back(a);
  for (double u : jumps_) {
    if (u > a) seg_points_.push_back(u);
  }
  seg_cumsum_ = MatrixXd::Zero(static_cast<Eigen::Index>(seg_points_.size()), d_);
  double e_prev = std::exp(extended_log_hazard(model.log_hazard, a));
  for (std::size_t k = 1; k < seg_points_.size(); ++k) {
    const double e_cur = std::exp(extended_log_hazard(model.log_hazard, seg_points_[k]));
    const auto r = static_cast<Eigen::Index>(k);
    seg_cumsum_.row(r) = seg_cumsum_.row(r - 1) + (e_cur - e_prev) * xbar_at(seg_points_[k]).transpose();
    e_prev = e_cur;
  }
}

VectorXd EfficientScoreParts::xbar_at(double t) const {
  const auto it = std::lower_bound(jumps_.begin(), jumps_.end(), t);
  if (it == jumps_.end()) throw DomainError("xbar: empty risk set");
  const auto k = static_cast<Eigen::Index>(it - jumps_.begin());
  return suffix_x_.row(k).transpose() / suffix_n_[static_cast<std::size_t>(k)];
}

VectorXd EfficientScoreParts::weighted_xbar_integral(double upper) const {
  if (upper <= seg_points_.front()) return VectorXd::Zero(d_);
  const auto it = std::upper_bound(seg_points_.begin() + 1, seg_points_.end(), upper);
  const auto k = static_cast<std::size_t>(it - seg_points_.begin()) - 1;
  VectorXd out = seg_cumsum_.row(static_cast<Eigen::Index>(k)).transpose();
  if (upper > seg_points_[k]) {
    const double e_lo = std::exp(extended_log_hazard(model_.log_hazard, seg_points_[k]));
    const double e_hi = std::exp(extended_log_hazard(model_.log_hazard, upper));
    out += (e_hi - e_lo) * xbar_at(upper);
  }
  return out;
}

VectorXd EfficientScoreParts::efficient_score(const Observation& obs) const {
  if (obs.x.size() != d_) throw InvalidArgument("efficient score: covariate dimension mismatch");
  const double eps = residual(obs, model_.beta);
  const double a = model_.log_hazard.basis().lower();
  VectorXd out = VectorXd::Zero(d_);
  if (obs.delta == 1) {
    out -= (obs.x - xbar_at(eps)) * extended_log_hazard_deriv(model_.log_hazard, eps);
  }
  if (eps > a) {
    // int_a^eps (x - xbar(s)) g'(s) e^{g(s)} ds, using (e^g)' = g' e^g on each xbar step
    const double e_a = std::exp(extended_log_hazard(model_.log_hazard, a));
    const double e_eps = std::exp(extended_log_hazard(model_.log_hazard, eps));
    out += obs.x * (e_eps - e_a) - weighted_xbar_integral(eps);
  }
  return out;
}

VectorXd efficient_score_i(const Observation& obs, const EfficientScoreParts& parts) {
  return parts.efficient_score(obs);
}

MatrixXd efficient_scores(const Dataset& data, const SieveModel& model) {
  const EfficientScoreParts parts(data, model);
  MatrixXd out(data.size(), data.dim());
  for (int i = 0; i < data.size(); ++i) {
    out.row(i) = parts.efficient_score(data.observation(i)).transpose();
  }
  return out;
}

MatrixXd info_efficient(const Dataset& data, const SieveModel& model) {
  const MatrixXd scores = efficient_scores(data, model);
  return scores.transpose() * scores / static_cast<double>(data.size());
}

namespace {

struct SymInverse {
  MatrixXd inverse;
  double condition = 0.0;
  bool singular = false;
};

// Inverse of a symmetric matrix expected to be positive definite.
SymInverse invert_spd(const MatrixXd& m) {
  SymInverse out;
  const MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  const VectorXd ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  const double bottom = ev.minCoeff();
  out.condition = bottom > 0.0 ? top / bottom : std::numeric_limits<double>::infinity();
  out.singular = !(top > 0.0) || !(bottom > 1e-12 * top);
  if (!out.singular) {
    out.inverse = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  }
  return out;
}

}  // namespace

InverseReport observed_beta_covariance(const MatrixXd& hessian, int d, int n, const std::vector<int>& held) {
  InverseReport report;
  std::vector<int> keep;
  for (int j = 0; j < hessian.rows(); ++j) {
    if (std::find(held.begin(), held.end(), j) == held.end()) keep.push_back(j);
  }
  if (static_cast<int>(keep.size()) < d || keep[static_cast<std::size_t>(d - 1)] != d - 1) {
    throw InvalidArgument("observed covariance: held indices must refer to spline coefficients");
  }
  const MatrixXd info = -static_cast<double>(n) * hessian(keep, keep);
  SymInverse inv = invert_spd(info);
  report.condition_number = inv.condition;
  if (inv.singular) {
    report.singular = true;
    const double top = std::max(info.cwiseAbs().maxCoeff(), 1e-300);
    const MatrixXd ridged = info + 1e-8 * top * MatrixXd::Identity(info.rows(), info.cols());
    inv.inverse = ridged.inverse();
  }
  report.inverse = inv.inverse.topLeftCorner(d, d);
  return report;
}

VarianceReport compute_variance(const Dataset& input, const FitResult& fit) {
  const Dataset data = canonical_order(input);
  const int d = data.dim();
  const int n = data.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  VarianceReport report;

  const MatrixXd scores = efficient_scores(data, fit.model);
  report.info_efficient = scores.transpose() * scores / static_cast<double>(n);
  report.efficient_score_mean = scores.colwise().sum().cwiseAbs().maxCoeff() / n;
  const SymInverse eff = invert_spd(report.info_efficient);
  report.condition_efficient = eff.condition;
  report.efficient_singular = eff.singular;
  report.see1 = eff.singular ? VectorXd::Constant(d, nan)
                             : VectorXd((eff.inverse.diagonal() / static_cast<double>(n)).cwiseSqrt());

  const InverseReport obs = observed_beta_covariance(fit.hessian_at_opt, d, n, fit.at_bound);
  report.condition_observed = obs.condition_number;
  report.observed_singular = obs.singular;
  report.see2 = obs.inverse.diagonal().cwiseSqrt();
  report.info_observed = obs.inverse.inverse();
  return report;
}

}  // namespace aft
