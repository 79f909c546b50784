#include "aft_sieve/fitter.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>

namespace aft {

void FitConfig::validate() const {
  if (order < 3) throw InvalidArgument("fit config: spline order must be >= 3");
  if (n_interior_knots < 0) throw InvalidArgument("fit config: negative interior knot count");
  if (!(tol > 0.0)) throw InvalidArgument("fit config: tol must be positive");
  if (max_iter < 1) throw InvalidArgument("fit config: max_iter must be >= 1");
  if (step_halving_max < 0) throw InvalidArgument("fit config: step_halving_max must be >= 0");
  if (!(ridge_eps > 0.0)) throw InvalidArgument("fit config: ridge_eps must be positive");
  if (quad_points < 1 || quad_points > 64) throw InvalidArgument("fit config: quad_points must be in [1, 64]");
  if (!(gamma_bound > 0.0)) throw InvalidArgument("fit config: gamma_bound must be positive");
  if (!(domain_margin >= 0.0)) throw InvalidArgument("fit config: domain_margin must be >= 0");
}

VectorXd initial_beta(const Dataset& data, bool* fallback) {
  const int d = data.dim();
  std::vector<int> events;
  for (int i = 0; i < data.size(); ++i) {
    if (data.delta()(i) == 1) events.push_back(i);
  }
  if (fallback) *fallback = false;
  const auto m = static_cast<Eigen::Index>(events.size());
  if (m >= d + 1) {
    MatrixXd design(m, d + 1);
    VectorXd rhs(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      const int i = events[static_cast<std::size_t>(k)];
      design(k, 0) = 1.0;
      design.row(k).tail(d) = data.x().row(i);
      rhs(k) = data.y()(i);
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
    if (qr.rank() == d + 1) {
      return qr.solve(rhs).tail(d);
    }
  }
  if (fallback) *fallback = true;
  return VectorXd::Zero(d);
}

InitialEstimate initial_estimate(const Dataset& data, double lower) {
  InitialEstimate out;
  out.beta = initial_beta(data, &out.fallback);
  const VectorXd eps = residuals(data, out.beta);
  const double exposure = (eps.array() - lower).max(0.0).sum();
  if (!(exposure > 0.0)) throw NumericalError("initial estimate: zero total exposure above a");
  out.log_hazard_level = std::log(static_cast<double>(data.n_events()) / exposure);
  return out;
}

SplineBasisd make_basis(const VectorXd& eps, const FitConfig& config) {
  const double lo = eps.minCoeff();
  const double hi = eps.maxCoeff();
  double margin = config.domain_margin * (hi - lo);
  if (!(margin > 0.0)) margin = std::max(1.0, std::abs(lo)) * 1e-3;
  std::vector<double> res(eps.data(), eps.data() + eps.size());
  return SplineBasisd(build_knots<double>(lo - margin, hi + margin, config.n_interior_knots, config.order,
                                          config.placement, res));
}

namespace {

// gamma coordinates pinned at the bound whose score pushes further out
std::vector<int> bound_set(const SieveModel& model, const VectorXd& score, int d, double bound) {
  std::vector<int> out;
  const VectorXd& gamma = model.log_hazard.coefficients();
  for (int j = 0; j < gamma.size(); ++j) {
    const double g = gamma(j);
    if (std::abs(g) >= bound * (1.0 - 1e-12) && g * score(d + j) >= 0.0) out.push_back(d + j);
  }
  return out;
}

std::vector<int> complement(const std::vector<int>& held, int n) {
  std::vector<int> out;
  std::size_t k = 0;
  for (int j = 0; j < n; ++j) {
    if (k < held.size() && held[k] == j) {
      ++k;
    } else {
      out.push_back(j);
    }
  }
  return out;
}

// Below a the cumulative hazard is zero while the continued log-hazard is
// free, so the likelihood is unbounded along paths that move events there.
double safe_value(const Dataset& data, const SieveModel& model, const QuadratureRule<double>& quad) {
  if (residuals(data, model.beta).minCoeff() < model.log_hazard.basis().lower()) {
    return -std::numeric_limits<double>::infinity();
  }
  try {
    return log_likelihood(data, model, quad);
  } catch (const Error&) {
    return -std::numeric_limits<double>::infinity();
  }
}

FitResult newton(const Dataset& data, const SieveModel& start, const FitConfig& config, bool hold_beta) {
  const auto quad = gauss_legendre<double>(config.quad_points);
  const int d = data.dim();
  const int n_par = start.n_params();

  FitResult result{.model = start};
  SieveModel model = start;
  LikelihoodWorkspace ws;
  try {
    ws = evaluate(data, model, quad, EvalLevel::hessian);
  } catch (const Error& e) {
    throw NumericalError(std::string("fit: cannot evaluate the likelihood at the start: ") + e.what());
  }
  result.loglik_trace.push_back(ws.value);

  bool converged = false;
  int accepted = 0;
  const auto held = [&] {
    std::vector<int> out = bound_set(model, ws.score, d, config.gamma_bound);
    if (hold_beta) {
      for (int k = d - 1; k >= 0; --k) out.insert(out.begin(), k);
    }
    return out;
  };
  for (int iter = 0; iter < config.max_iter; ++iter) {
    const std::vector<int> free = complement(held(), n_par);
    const auto m = static_cast<Eigen::Index>(free.size());
    const VectorXd free_score = ws.score(free);
    const double grad = free_score.lpNorm<Eigen::Infinity>();

    const MatrixXd neg_h = -ws.hessian(free, free);
    Eigen::LLT<MatrixXd> llt(neg_h);
    double ridge = config.ridge_eps;
    while (llt.info() != Eigen::Success) {
      ++result.ridge_count;
      llt.compute(neg_h + ridge * MatrixXd::Identity(m, m));
      ridge *= 10.0;
      if (ridge > 1e12) throw NumericalError("fit: Hessian could not be stabilized by ridging");
    }
    VectorXd step = VectorXd::Zero(n_par);
    const VectorXd free_step = llt.solve(free_score);
    step(free) = free_step;
    if (!step.allFinite()) throw NumericalError("fit: non-finite Newton step");

    if (std::max(grad, step.lpNorm<Eigen::Infinity>()) <= config.tol) {
      converged = true;
      break;
    }

    const VectorXd theta = model.theta();
    double scale = 1.0;
    bool moved = false;
    for (int k = 0; k <= config.step_halving_max; ++k, scale *= 0.5) {
      VectorXd trial = theta + scale * step;
      auto gamma = trial.tail(n_par - d);
      if (gamma.cwiseAbs().maxCoeff() > config.gamma_bound) {
        gamma = gamma.cwiseMax(-config.gamma_bound).cwiseMin(config.gamma_bound);
        ++result.gamma_clip_count;
      }
      SieveModel candidate = model.with_theta(trial);
      const double value = safe_value(data, candidate, quad);
      if (std::isfinite(value) && value >= ws.value) {
        model = std::move(candidate);
        moved = true;
        break;
      }
    }
    if (!moved) break;
    ws = evaluate(data, model, quad, EvalLevel::hessian);
    result.loglik_trace.push_back(ws.value);
    ++accepted;
  }

  result.model = model;
  result.loglik = ws.value;
  result.n_iter = accepted;
  result.score_at_opt = ws.score;
  result.hessian_at_opt = ws.hessian;
  result.at_bound = bound_set(model, ws.score, d, config.gamma_bound);
  result.grad_norm = ws.score(complement(held(), n_par)).lpNorm<Eigen::Infinity>();
  result.converged = converged || result.grad_norm <= config.tol;
  if (!result.converged) {
    result.warnings.push_back("Newton iterations stopped with gradient norm above tolerance");
  }
  if (result.gamma_clip_count > 0) {
    result.warnings.push_back("spline coefficients clipped to the gamma bound");
  }

  const double a = model.log_hazard.basis().lower();
  const double b = model.log_hazard.basis().upper();
  const VectorXd eps = residuals(data, model.beta);
  const auto outside = (eps.array() < a || eps.array() > b).count();
  result.extrapolation_fraction = static_cast<double>(outside) / data.size();
  result.extrapolation_flag = result.extrapolation_fraction > 0.01;
  if (result.extrapolation_flag) {
    result.warnings.push_back("more than 1% of residuals fall outside the spline domain");
  }
  return result;
}

}  // namespace

FitResult fit_from(const Dataset& data, const SieveModel& start, const FitConfig& config) {
  config.validate();
  return newton(data, start, config, false);
}

FitResult fit_log_hazard(const Dataset& data, const SieveModel& start, const FitConfig& config) {
  config.validate();
  return newton(data, start, config, true);
}

FitResult fit(const Dataset& input, const FitConfig& config, const std::optional<SplineBasisd>& seed_basis) {
  config.validate();
  const Dataset data = canonical_order(input);
  bool fallback = false;
  const VectorXd beta0 = initial_beta(data, &fallback);
  const VectorXd eps = residuals(data, beta0);
  SplineBasisd basis = seed_basis ? *seed_basis : make_basis(eps, config);
  if (basis.order() < 3) throw InvalidArgument("fit: spline order must be >= 3");

  const double exposure = (eps.array() - basis.lower()).max(0.0).sum();
  if (!(exposure > 0.0)) throw NumericalError("fit: zero total exposure above the domain start");
  const double level = std::log(static_cast<double>(data.n_events()) / exposure);

  SieveModel start{beta0, SplineFunctiond(basis, VectorXd::Constant(basis.size(), level))};
  // Shape the log-hazard at the starting beta first; from a flat hazard the
  // joint step tends to chase beta toward the lower domain edge.
  const FitResult warm = newton(data, start, config, true);
  FitResult result = fit_from(data, warm.model, config);
  result.loglik_trace.insert(result.loglik_trace.begin(), warm.loglik_trace.begin(), warm.loglik_trace.end() - 1);
  result.n_iter += warm.n_iter;
  result.ridge_count += warm.ridge_count;
  result.gamma_clip_count += warm.gamma_clip_count;
  if (fallback) {
    result.warnings.insert(result.warnings.begin(),
                           "rank-deficient uncensored design; started from beta = 0");
  }
  return result;
}

}  // namespace aft
