#include "aft_sieve/simulation.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <numeric>
#include <thread>

namespace aft {

namespace {

constexpr double kEuler = 0.57721566490153286061;
constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }
double normal_sf(double z) { return 0.5 * std::erfc(z / kSqrt2); }

// Composite Gauss-Legendre over [lo, hi] with equal panels.
template <typename F>
double integrate_panels(F&& f, double lo, double hi, int panels, const QuadratureRule<double>& rule) {
  if (!(hi > lo)) return 0.0;
  const double width = (hi - lo) / panels;
  double total = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double a = lo + k * width;
    const double half = 0.5 * width;
    const double mid = a + half;
    for (int j = 0; j < rule.n_points(); ++j) {
      total += half * rule.weights(j) * f(mid + half * rule.nodes(j));
    }
  }
  return total;
}

const QuadratureRule<double>& rule16() {
  static const QuadratureRule<double> rule = gauss_legendre<double>(16);
  return rule;
}

const QuadratureRule<double>& rule24() {
  static const QuadratureRule<double> rule = gauss_legendre<double>(24);
  return rule;
}

// Probability that the censoring variable C' is at least s.
double censoring_survival(double s, double c, CensoringScale scale) {
  if (!std::isfinite(c)) return 1.0;
  if (scale == CensoringScale::log_time) return std::clamp(1.0 - s / c, 0.0, 1.0);
  return std::clamp(1.0 - std::exp(s) / c, 0.0, 1.0);
}

// Values of s where censoring_survival has kinks.
std::vector<double> censoring_kinks(double c, CensoringScale scale) {
  if (scale == CensoringScale::log_time) return {0.0, c};
  return {std::log(c)};
}

}  // namespace

double uniform_open(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

double standard_normal(Rng& rng) {
  const double u1 = uniform_open(rng);
  const double u2 = uniform_open(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// ---------------------------------------------------------------------------
// Error laws

ErrorDistribution ErrorDistribution::normal_mixture(std::vector<double> weights, std::vector<double> means,
                                                    std::vector<double> sds, std::string name) {
  if (weights.empty() || weights.size() != means.size() || weights.size() != sds.size()) {
    throw InvalidArgument("normal mixture: weights, means and sds must have equal nonzero length");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!(weights[k] > 0.0)) throw InvalidArgument("normal mixture: weights must be positive");
    if (!(sds[k] > 0.0) || !std::isfinite(sds[k])) {
      throw InvalidArgument("normal mixture: component standard deviations must be positive (no point masses)");
    }
    if (!std::isfinite(means[k])) throw InvalidArgument("normal mixture: non-finite mean");
    total += weights[k];
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("normal mixture: weights must sum to 1");
  ErrorDistribution out;
  out.family_ = Family::normal_mixture;
  out.weights_ = std::move(weights);
  out.means_ = std::move(means);
  out.sds_ = std::move(sds);
  out.name_ = std::move(name);
  return out;
}

ErrorDistribution ErrorDistribution::extreme_value(double location, double scale, std::string name) {
  if (!(scale > 0.0) || !std::isfinite(scale) || !std::isfinite(location)) {
    throw InvalidArgument("extreme value: scale must be positive (no point masses)");
  }
  ErrorDistribution out;
  out.family_ = Family::extreme_value;
  out.weights_ = {1.0};
  out.means_ = {location};
  out.sds_ = {scale};
  out.name_ = std::move(name);
  return out;
}

ErrorDistribution ErrorDistribution::gumbel(double location, double scale, std::string name) {
  if (!(scale > 0.0) || !std::isfinite(scale) || !std::isfinite(location)) {
    throw InvalidArgument("gumbel: scale must be positive (no point masses)");
  }
  ErrorDistribution out;
  out.family_ = Family::gumbel;
  out.weights_ = {1.0};
  out.means_ = {location};
  out.sds_ = {scale};
  out.name_ = std::move(name);
  return out;
}

ErrorDistribution ErrorDistribution::from_kind(ErrorKind kind) {
  ErrorDistribution out;
  switch (kind) {
    case ErrorKind::std_normal:
      out = normal_mixture({1.0}, {0.0}, {1.0}, "std_normal");
      out.key_ = "a";
      break;
    case ErrorKind::std_extreme_value:
      out = extreme_value(0.0, 1.0, "std_extreme_value");
      out.key_ = "b";
      break;
    case ErrorKind::mix_05_n01_n09:
      out = normal_mixture({0.5, 0.5}, {0.0, 0.0}, {1.0, 3.0}, "mix_05_n01_n09");
      out.key_ = "c";
      break;
    case ErrorKind::mix_095_n01_n09:
      out = normal_mixture({0.95, 0.05}, {0.0, 0.0}, {1.0, 3.0}, "mix_095_n01_n09");
      out.key_ = "d";
      break;
    case ErrorKind::gumbel_half:
      out = gumbel(-0.5 * kEuler, 0.5, "gumbel_half");
      out.key_ = "e";
      break;
    case ErrorKind::mix_shifted_normal:
      out = normal_mixture({0.5, 0.5}, {0.0, -1.0}, {1.0, 0.5}, "mix_shifted_normal");
      out.key_ = "f";
      break;
  }
  return out;
}

ErrorDistribution ErrorDistribution::from_key(std::string_view key) {
  static const std::pair<std::string_view, ErrorKind> table[] = {
      {"a", ErrorKind::std_normal},          {"std_normal", ErrorKind::std_normal},
      {"b", ErrorKind::std_extreme_value},   {"std_extreme_value", ErrorKind::std_extreme_value},
      {"c", ErrorKind::mix_05_n01_n09},      {"mix_05_n01_n09", ErrorKind::mix_05_n01_n09},
      {"d", ErrorKind::mix_095_n01_n09},     {"mix_095_n01_n09", ErrorKind::mix_095_n01_n09},
      {"e", ErrorKind::gumbel_half},         {"gumbel_half", ErrorKind::gumbel_half},
      {"f", ErrorKind::mix_shifted_normal},  {"mix_shifted_normal", ErrorKind::mix_shifted_normal},
  };
  for (const auto& [name, kind] : table) {
    if (name == key) return from_kind(kind);
  }
  throw InvalidArgument("unknown error distribution '" + std::string(key) + "' (expected a..f)");
}

double ErrorDistribution::pdf(double t) const {
  switch (family_) {
    case Family::normal_mixture: {
      double f = 0.0;
      for (std::size_t k = 0; k < weights_.size(); ++k) {
        f += weights_[k] * normal_pdf((t - means_[k]) / sds_[k]) / sds_[k];
      }
      return f;
    }
    case Family::extreme_value: {
      const double z = (t - means_[0]) / sds_[0];
      return std::exp(z - std::exp(z)) / sds_[0];
    }
    case Family::gumbel: {
      const double z = (t - means_[0]) / sds_[0];
      return std::exp(-z - std::exp(-z)) / sds_[0];
    }
  }
  return 0.0;
}

double ErrorDistribution::cdf(double t) const {
  switch (family_) {
    case Family::normal_mixture: {
      double F = 0.0;
      for (std::size_t k = 0; k < weights_.size(); ++k) F += weights_[k] * normal_cdf((t - means_[k]) / sds_[k]);
      return F;
    }
    case Family::extreme_value:
      return -std::expm1(-std::exp((t - means_[0]) / sds_[0]));
    case Family::gumbel:
      return std::exp(-std::exp(-(t - means_[0]) / sds_[0]));
  }
  return 0.0;
}

double ErrorDistribution::sf(double t) const {
  switch (family_) {
    case Family::normal_mixture: {
      double S = 0.0;
      for (std::size_t k = 0; k < weights_.size(); ++k) S += weights_[k] * normal_sf((t - means_[k]) / sds_[k]);
      return S;
    }
    case Family::extreme_value:
      return std::exp(-std::exp((t - means_[0]) / sds_[0]));
    case Family::gumbel:
      return -std::expm1(-std::exp(-(t - means_[0]) / sds_[0]));
  }
  return 0.0;
}

double ErrorDistribution::pdf_deriv(double t) const {
  switch (family_) {
    case Family::normal_mixture: {
      double fp = 0.0;
      for (std::size_t k = 0; k < weights_.size(); ++k) {
        const double z = (t - means_[k]) / sds_[k];
        fp += weights_[k] * normal_pdf(z) / sds_[k] * (-z / sds_[k]);
      }
      return fp;
    }
    case Family::extreme_value: {
      const double z = (t - means_[0]) / sds_[0];
      return pdf(t) * (1.0 - std::exp(z)) / sds_[0];
    }
    case Family::gumbel: {
      const double z = (t - means_[0]) / sds_[0];
      return pdf(t) * (std::exp(-z) - 1.0) / sds_[0];
    }
  }
  return 0.0;
}

double ErrorDistribution::log_hazard_deriv(double t) const {
  switch (family_) {
    case Family::extreme_value:
      return 1.0 / sds_[0];
    case Family::gumbel: {
      const double z = (t - means_[0]) / sds_[0];
      const double u = std::exp(-z);
      return ((u - 1.0) + u * std::exp(-u) / -std::expm1(-u)) / sds_[0];
    }
    case Family::normal_mixture: {
      // f'/f through log-weights so that it stays finite where f underflows
      std::vector<double> lw(weights_.size());
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < weights_.size(); ++k) {
        const double z = (t - means_[k]) / sds_[k];
        lw[k] = std::log(weights_[k] / sds_[k]) - 0.5 * z * z;
        top = std::max(top, lw[k]);
      }
      double num = 0.0;
      double den = 0.0;
      for (std::size_t k = 0; k < weights_.size(); ++k) {
        const double r = std::exp(lw[k] - top);
        num += r * (-(t - means_[k]) / (sds_[k] * sds_[k]));
        den += r;
      }
      return num / den + hazard(t);
    }
  }
  return 0.0;
}

double ErrorDistribution::mean() const {
  switch (family_) {
    case Family::normal_mixture: {
      double m = 0.0;
      for (std::size_t k = 0; k < weights_.size(); ++k) m += weights_[k] * means_[k];
      return m;
    }
    case Family::extreme_value: return means_[0] - kEuler * sds_[0];
    case Family::gumbel: return means_[0] + kEuler * sds_[0];
  }
  return 0.0;
}

double ErrorDistribution::variance() const {
  if (family_ != Family::normal_mixture) {
    return std::numbers::pi * std::numbers::pi * sds_[0] * sds_[0] / 6.0;
  }
  double second = 0.0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    second += weights_[k] * (sds_[k] * sds_[k] + means_[k] * means_[k]);
  }
  const double m = mean();
  return second - m * m;
}

double ErrorDistribution::sample(Rng& rng) const {
  switch (family_) {
    case Family::normal_mixture: {
      std::size_t k = 0;
      if (weights_.size() > 1) {
        const double u = uniform_open(rng);
        double acc = 0.0;
        for (k = 0; k + 1 < weights_.size(); ++k) {
          acc += weights_[k];
          if (u < acc) break;
        }
      }
      return means_[k] + sds_[k] * standard_normal(rng);
    }
    case Family::extreme_value:
      return means_[0] + sds_[0] * std::log(-std::log(uniform_open(rng)));
    case Family::gumbel:
      return means_[0] - sds_[0] * std::log(-std::log(uniform_open(rng)));
  }
  return 0.0;
}

double ErrorDistribution::quantile(double prob) const {
  if (!(prob > 0.0 && prob < 1.0)) throw InvalidArgument("quantile: probability must be in (0, 1)");
  const bool upper = prob > 0.5;
  const double target = upper ? 1.0 - prob : prob;
  auto tail = [&](double t) { return upper ? sf(t) : cdf(t); };
  double lo = -1.0;
  double hi = 1.0;
  // tail() is decreasing in t for the upper tail, increasing for the lower tail
  if (upper) {
    while (tail(hi) > target) hi *= 2.0;
    while (tail(lo) < target) lo *= 2.0;
  } else {
    while (tail(lo) > target) lo *= 2.0;
    while (tail(hi) < target) hi *= 2.0;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    const bool right = upper ? tail(mid) > target : tail(mid) < target;
    (right ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Covariates

VectorXd CovariateDesign::sample(Rng& rng) const {
  VectorXd x(2);
  x(0) = uniform_open(rng) < bernoulli_p ? 1.0 : 0.0;
  double z = 0.0;
  do {
    z = normal_sd * standard_normal(rng);
  } while (std::abs(z) > truncation);
  x(1) = z;
  return x;
}

namespace {

double truncated_mass(const CovariateDesign& cov) {
  const double r = cov.truncation / cov.normal_sd;
  return normal_cdf(r) - normal_cdf(-r);
}

// Calls visit(x2, density weight) over [lo, hi] within the truncation window.
template <typename Visit>
void x2_quadrature(const CovariateDesign& cov, double lo, double hi, Visit&& visit) {
  lo = std::max(lo, -cov.truncation);
  hi = std::min(hi, cov.truncation);
  if (!(hi > lo)) return;
  const double norm = truncated_mass(cov) * cov.normal_sd;
  const auto& rule = rule24();
  const double half = 0.5 * (hi - lo);
  const double mid = 0.5 * (hi + lo);
  for (int j = 0; j < rule.n_points(); ++j) {
    const double x2 = mid + half * rule.nodes(j);
    visit(x2, half * rule.weights(j) * normal_pdf(x2 / cov.normal_sd) / norm);
  }
}

// Quadrature nodes on the truncated x2 range, split into equal pieces.
template <typename Visit>
void x2_quadrature_pieces(const CovariateDesign& cov, int pieces, Visit&& visit) {
  const double width = 2.0 * cov.truncation / pieces;
  for (int k = 0; k < pieces; ++k) {
    x2_quadrature(cov, -cov.truncation + k * width, -cov.truncation + (k + 1) * width, visit);
  }
}

}  // namespace

void CovariateDesign::nodes(int pieces, MatrixXd& x, VectorXd& w) const {
  std::vector<std::pair<double, double>> x2;
  x2_quadrature_pieces(*this, pieces, [&](double v, double wt) { x2.emplace_back(v, wt); });
  const auto m = static_cast<Eigen::Index>(x2.size());
  x.resize(2 * m, 2);
  w.resize(2 * m);
  for (Eigen::Index k = 0; k < m; ++k) {
    for (int x1 = 0; x1 < 2; ++x1) {
      const Eigen::Index r = x1 * m + k;
      x(r, 0) = x1;
      x(r, 1) = x2[static_cast<std::size_t>(k)].first;
      w(r) = (x1 == 1 ? bernoulli_p : 1.0 - bernoulli_p) * x2[static_cast<std::size_t>(k)].second;
    }
  }
}

double CovariateDesign::x2_second_moment() const {
  double total = 0.0;
  x2_quadrature_pieces(*this, 8, [&](double v, double wt) { total += wt * v * v; });
  return total;
}

CensoringScale censoring_scale_from_string(std::string_view s) {
  if (s == "log" || s == "log_time") return CensoringScale::log_time;
  if (s == "time") return CensoringScale::time;
  throw InvalidArgument("unknown censoring scale '" + std::string(s) + "' (expected log or time)");
}

const char* to_string(CensoringScale s) {
  return s == CensoringScale::log_time ? "log_time" : "time";
}

// ---------------------------------------------------------------------------
// Designs and data

int SimDesign::interior_knots() const {
  if (n_interior_knots >= 0) return n_interior_knots;
  return n < 500 ? 1 : 2;
}

void SimDesign::validate() const {
  if (n < 10) throw InvalidArgument("simulation: n must be >= 10");
  if (n_reps < 1) throw InvalidArgument("simulation: reps must be >= 1");
  if (!(censor_rate_target >= 0.0 && censor_rate_target < 1.0)) {
    throw InvalidArgument("simulation: censoring target must lie in [0, 1)");
  }
  if (covariates.beta0.size() != 2) throw InvalidArgument("simulation: the covariate design has two slopes");
  if (calibration_draws < 1000) throw InvalidArgument("simulation: too few calibration draws");
  fit.validate();
}

Dataset gen_dataset(const SimDesign& design, double censor_c, Rng& rng) {
  if (!(censor_c > 0.0)) throw InvalidArgument("gen_dataset: censoring bound c must be positive");
  const int n = design.n;
  const CovariateDesign& cov = design.covariates;
  VectorXd y(n);
  Eigen::VectorXi delta(n);
  MatrixXd x(n, 2);
  for (int i = 0; i < n; ++i) {
    const VectorXd xi = cov.sample(rng);
    const double e = design.error.sample(rng);
    const double t = cov.intercept + xi.dot(cov.beta0) + e;
    double c = std::numeric_limits<double>::infinity();
    if (std::isfinite(censor_c)) {
      const double u = uniform_open(rng);
      c = design.censoring == CensoringScale::log_time ? u * censor_c : std::log(u * censor_c);
    }
    x.row(i) = xi.transpose();
    y(i) = std::min(t, c);
    delta(i) = t <= c ? 1 : 0;
  }
  return Dataset(std::move(y), std::move(delta), std::move(x));
}

CensoringCalibrator::CensoringCalibrator(const ErrorDistribution& error, const CovariateDesign& cov,
                                         CensoringScale scale, int n_draws, Rng& rng)
    : scale_(scale) {
  event_times_.resize(static_cast<std::size_t>(n_draws));
  uniforms_.resize(static_cast<std::size_t>(n_draws));
  for (int i = 0; i < n_draws; ++i) {
    const VectorXd x = cov.sample(rng);
    event_times_[static_cast<std::size_t>(i)] = cov.intercept + x.dot(cov.beta0) + error.sample(rng);
    uniforms_[static_cast<std::size_t>(i)] = uniform_open(rng);
  }
}

double CensoringCalibrator::rate(double c) const {
  std::size_t censored = 0;
  for (std::size_t i = 0; i < event_times_.size(); ++i) {
    const double cens = scale_ == CensoringScale::log_time ? uniforms_[i] * c : std::log(uniforms_[i] * c);
    censored += cens < event_times_[i] ? 1 : 0;
  }
  return static_cast<double>(censored) / static_cast<double>(event_times_.size());
}

double CensoringCalibrator::solve(double target) const {
  if (!(target > 0.0 && target < 1.0)) {
    throw NumericalError("calibrate_censoring: target rate must lie strictly inside (0, 1)");
  }
  double lo = std::log(1e-6);
  double hi = std::log(1e6);
  if (rate(std::exp(lo)) < target || rate(std::exp(hi)) > target) {
    throw NumericalError("calibrate_censoring: target censoring rate cannot be bracketed");
  }
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (rate(std::exp(mid)) > target ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

double calibrate_censoring(const ErrorDistribution& error, double target, Rng& rng, CensoringScale scale,
                           const CovariateDesign& cov, int n_draws) {
  if (!(target > 0.0 && target < 1.0)) {
    throw NumericalError("calibrate_censoring: target rate must lie strictly inside (0, 1)");
  }
  return CensoringCalibrator(error, cov, scale, n_draws, rng).solve(target);
}

double censoring_rate_exact(const ErrorDistribution& error, double c, CensoringScale scale,
                            const CovariateDesign& cov) {
  MatrixXd nodes;
  VectorXd weights;
  cov.nodes(4, nodes, weights);
  const double e_lo = error.quantile(1e-15);
  const double e_hi = error.quantile(1.0 - 1e-15);
  double total = 0.0;
  for (Eigen::Index k = 0; k < nodes.rows(); ++k) {
    const double m = cov.intercept + nodes.row(k).dot(cov.beta0);
    // P(C' < m + e) = 1 - censoring_survival(m + e), integrated over e
    std::vector<double> cuts{e_lo};
    for (double kink : censoring_kinks(c, scale)) {
      if (kink - m > e_lo && kink - m < e_hi) cuts.push_back(kink - m);
    }
    cuts.push_back(e_hi);
    std::sort(cuts.begin(), cuts.end());
    double inner = 0.0;
    for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
      inner += integrate_panels(
          [&](double e) { return error.pdf(e) * (1.0 - censoring_survival(m + e, c, scale)); }, cuts[j],
          cuts[j + 1], 32, rule16());
    }
    total += weights(k) * inner;
  }
  return total;
}

double calibrate_censoring_exact(const ErrorDistribution& error, double target, CensoringScale scale,
                                 const CovariateDesign& cov) {
  if (!(target > 0.0 && target < 1.0)) {
    throw NumericalError("calibrate_censoring: target rate must lie strictly inside (0, 1)");
  }
  double lo = std::log(1e-4);
  double hi = std::log(1e5);
  if (censoring_rate_exact(error, std::exp(lo), scale, cov) < target ||
      censoring_rate_exact(error, std::exp(hi), scale, cov) > target) {
    throw NumericalError("calibrate_censoring: target censoring rate cannot be bracketed");
  }
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (censoring_rate_exact(error, std::exp(mid), scale, cov) > target ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

// ---------------------------------------------------------------------------
// Efficiency bound

EfficiencyBound efficiency_bound(const ErrorDistribution& error, int n, double censor_c, CensoringScale scale,
                                 const CovariateDesign& cov) {
  if (n < 1) throw InvalidArgument("efficiency_bound: n must be positive");
  if (!(censor_c > 0.0)) throw InvalidArgument("efficiency_bound: censoring bound c must be positive");
  const double b1 = cov.beta0(0);
  const double b2 = cov.beta0(1);
  const double p1 = cov.bernoulli_p;
  const std::vector<double> kinks =
      std::isfinite(censor_c) ? censoring_kinks(censor_c, scale) : std::vector<double>{};

  // E[{1, X, XX'} G(t, X)] over the covariate law, split at the x2 kinks of G
  auto moments = [&](double t, double& m0, Eigen::Vector2d& m1, Eigen::Matrix2d& m2) {
    m0 = 0.0;
    m1.setZero();
    m2.setZero();
    for (int x1 = 0; x1 < 2; ++x1) {
      const double px1 = x1 == 1 ? p1 : 1.0 - p1;
      const double base = t + cov.intercept + b1 * x1;
      std::vector<double> cuts{-cov.truncation};
      if (b2 != 0.0) {
        for (double kink : kinks) cuts.push_back((kink - base) / b2);
      }
      cuts.push_back(cov.truncation);
      std::sort(cuts.begin(), cuts.end());
      for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
        x2_quadrature(cov, cuts[j], cuts[j + 1], [&](double x2, double w) {
          const double g = censoring_survival(base + b2 * x2, censor_c, scale);
          if (g <= 0.0) return;
          const Eigen::Vector2d x(x1, x2);
          const double wg = px1 * w * g;
          m0 += wg;
          m1 += wg * x;
          m2 += wg * x * x.transpose();
        });
      }
    }
  };

  auto integrand = [&](double t) -> Eigen::Matrix2d {
    const double f = error.pdf(t);
    if (!(f > 0.0)) return Eigen::Matrix2d::Zero();
    double m0 = 0.0;
    Eigen::Vector2d m1;
    Eigen::Matrix2d m2;
    moments(t, m0, m1, m2);
    if (!(m0 > 0.0)) return Eigen::Matrix2d::Zero();
    const double gd = error.log_hazard_deriv(t);
    return f * gd * gd * (m2 - m1 * m1.transpose() / m0);
  };

  // t window: lower 1e-12 quantile to the 1e-6 survival quantile, clipped to the censoring support
  const double t_lo = error.quantile(1e-12);
  double t_hi = error.quantile(1.0 - 1e-6);
  std::vector<double> cuts{t_lo};
  for (double kink : kinks) {
    for (int x1 = 0; x1 < 2; ++x1) {
      for (double x2 : {-cov.truncation, cov.truncation}) {
        cuts.push_back(kink - cov.intercept - b1 * x1 - b2 * x2);
      }
    }
  }
  if (std::isfinite(censor_c)) {
    const double top = *std::max_element(kinks.begin(), kinks.end());
    double reach = -std::numeric_limits<double>::infinity();
    for (int x1 = 0; x1 < 2; ++x1) {
      for (double x2 : {-cov.truncation, cov.truncation}) {
        reach = std::max(reach, top - cov.intercept - b1 * x1 - b2 * x2);
      }
    }
    t_hi = std::min(t_hi, reach);
  }
  cuts.push_back(t_hi);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::remove_if(cuts.begin(), cuts.end(), [&](double v) { return v < t_lo || v > t_hi; }),
             cuts.end());

  Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
  const auto& rule = rule16();
  for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
    const double lo = cuts[j];
    const double hi = cuts[j + 1];
    if (!(hi > lo)) continue;
    const int panels = 48;
    const double width = (hi - lo) / panels;
    for (int k = 0; k < panels; ++k) {
      const double half = 0.5 * width;
      const double mid = lo + k * width + half;
      for (int r = 0; r < rule.n_points(); ++r) {
        info += half * rule.weights(r) * integrand(mid + half * rule.nodes(r));
      }
    }
  }

  EfficiencyBound out;
  out.censor_c = censor_c;
  out.information = info;
  const Eigen::Matrix2d inv = info.inverse();
  out.sigma_star = (inv.diagonal() / static_cast<double>(n)).cwiseSqrt();
  return out;
}

EfficiencyBound efficiency_bound_at_rate(const ErrorDistribution& error, int n, double target,
                                         CensoringScale scale, const CovariateDesign& cov) {
  const double c = target > 0.0 ? calibrate_censoring_exact(error, target, scale, cov)
                                : std::numeric_limits<double>::infinity();
  return efficiency_bound(error, n, c, scale, cov);
}

// ---------------------------------------------------------------------------
// Study

int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("AFT_SIEVE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

Rng replication_rng(std::uint64_t seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index + 1)};
  return Rng(seq);
}

ReplicationResult run_replication(const SimDesign& design, double censor_c, int index) {
  ReplicationResult rep;
  try {
    Rng rng = replication_rng(design.seed, index);
    const Dataset data = gen_dataset(design, censor_c, rng);
    rep.censor_fraction = 1.0 - static_cast<double>(data.n_events()) / data.size();
    FitConfig config = design.fit;
    config.n_interior_knots = design.interior_knots();
    const FitResult fitted = fit(data, config);
    rep.n_iter = fitted.n_iter;
    rep.beta = fitted.model.beta;
    if (!fitted.converged) {
      rep.failure = "not converged";
      return rep;
    }
    const VarianceReport var = compute_variance(data, fitted);
    rep.see1 = var.see1;
    rep.see2 = var.see2;
    if (!var.see1.allFinite() || !var.see2.allFinite()) {
      rep.failure = "non-finite standard error";
      return rep;
    }
    rep.ok = true;
  } catch (const std::exception& e) {
    rep.failure = e.what();
  }
  return rep;
}

SimulationSummary run_study(const SimDesign& design) {
  design.validate();
  SimulationSummary summary;
  summary.error_key = design.error.key();
  summary.error_name = design.error.name();
  summary.n = design.n;
  summary.n_reps = design.n_reps;
  summary.seed = design.seed;
  summary.n_interior_knots = design.interior_knots();

  double c = std::numeric_limits<double>::infinity();
  if (design.censor_rate_target > 0.0) {
    Rng cal_rng = replication_rng(design.seed, -1);
    c = calibrate_censoring(design.error, design.censor_rate_target, cal_rng, design.censoring,
                            design.covariates, design.calibration_draws);
  }
  summary.censor_c = c;

  summary.replications.resize(static_cast<std::size_t>(design.n_reps));
  std::atomic<int> next{0};
  const int n_threads = std::min(resolve_thread_count(design.threads), design.n_reps);
  {
    std::vector<std::jthread> workers;
    for (int w = 0; w < n_threads; ++w) {
      workers.emplace_back([&] {
        for (int r = next++; r < design.n_reps; r = next++) {
          summary.replications[static_cast<std::size_t>(r)] = run_replication(design, c, r);
        }
      });
    }
  }

  std::vector<const ReplicationResult*> good;
  std::string first_failure;
  double cmin = 1.0;
  double cmax = 0.0;
  double csum = 0.0;
  for (const auto& rep : summary.replications) {
    csum += rep.censor_fraction;
    cmin = std::min(cmin, rep.censor_fraction);
    cmax = std::max(cmax, rep.censor_fraction);
    if (rep.ok) {
      good.push_back(&rep);
    } else if (first_failure.empty()) {
      first_failure = rep.failure;
    }
  }
  summary.censor_rate_mean = csum / design.n_reps;
  summary.censor_rate_min = cmin;
  summary.censor_rate_max = cmax;
  summary.n_failed = design.n_reps - static_cast<int>(good.size());
  if (summary.n_failed * 10 > design.n_reps || good.size() < 2) {
    throw NumericalError("run_study: " + std::to_string(summary.n_failed) + " of " +
                         std::to_string(design.n_reps) + " replications failed (first: " + first_failure + ")");
  }

  const EfficiencyBound bound = efficiency_bound(design.error, design.n, c, design.censoring, design.covariates);
  const double z95 = 1.959963984540054;
  const double m = static_cast<double>(good.size());
  for (int k = 0; k < 2; ++k) {
    ParameterSummary ps;
    ps.name = "beta" + std::to_string(k + 1);
    ps.truth = design.covariates.beta0(k);
    double sum = 0.0;
    double s1 = 0.0;
    double s2 = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    for (const auto* rep : good) {
      const double est = rep->beta(k);
      sum += est;
      s1 += rep->see1(k);
      s2 += rep->see2(k);
      c1 += std::abs(est - ps.truth) <= z95 * rep->see1(k) ? 1.0 : 0.0;
      c2 += std::abs(est - ps.truth) <= z95 * rep->see2(k) ? 1.0 : 0.0;
    }
    ps.est = sum / m;
    double ss = 0.0;
    for (const auto* rep : good) ss += (rep->beta(k) - ps.est) * (rep->beta(k) - ps.est);
    ps.se = std::sqrt(ss / (m - 1.0));
    ps.bias = ps.est - ps.truth;
    ps.see1 = s1 / m;
    ps.see2 = s2 / m;
    ps.cp1 = c1 / m;
    ps.cp2 = c2 / m;
    ps.sigma_star = bound.sigma_star(k);
    const double z = (ps.se - ps.sigma_star) / (ps.se / std::sqrt(2.0 * (m - 1.0)));
    ps.below_bound = z < -2.3263478740408408;
    summary.params.push_back(ps);
  }
  return summary;
}

}  // namespace aft
