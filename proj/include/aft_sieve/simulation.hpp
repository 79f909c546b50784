#pragma once

// Monte Carlo study of the sieve estimator under
//   log T = 2 + X1 + X2 + e,  X1 ~ Bernoulli(0.5),  X2 ~ N(0, 0.5^2) truncated at +/-2,
// with uniform[0, c] censoring calibrated to a target censoring rate, plus the
// semiparametric efficiency bound sigma* = sqrt(diag I^{-1}(beta0) / n).

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "aft_sieve/fitter.hpp"
#include "aft_sieve/variance.hpp"

namespace aft {

using Rng = std::mt19937_64;

/// Uniform draw on the open interval (0, 1).
double uniform_open(Rng& rng);
double standard_normal(Rng& rng);

enum class ErrorKind {
  std_normal,          // (a) N(0, 1)
  std_extreme_value,   // (b) F(t) = 1 - exp(-e^t)
  mix_05_n01_n09,      // (c) 0.5 N(0,1) + 0.5 N(0,3^2)
  mix_095_n01_n09,     // (d) 0.95 N(0,1) + 0.05 N(0,3^2)
  gumbel_half,         // (e) Gumbel(-0.5 mu, 0.5), mu = Euler's constant
  mix_shifted_normal,  // (f) 0.5 N(0,1) + 0.5 N(-1,0.5^2)
};

class ErrorDistribution {
 public:
  static ErrorDistribution from_kind(ErrorKind kind);
  /// Accepts the table letters "a".."f" or the kind names above.
  static ErrorDistribution from_key(std::string_view key);
  static ErrorDistribution normal_mixture(std::vector<double> weights, std::vector<double> means,
                                          std::vector<double> sds, std::string name = "normal_mixture");
  /// Minimum-type extreme value: F(t) = 1 - exp(-exp((t - location)/scale)).
  static ErrorDistribution extreme_value(double location, double scale, std::string name = "extreme_value");
  /// Maximum-type Gumbel: F(t) = exp(-exp(-(t - location)/scale)).
  static ErrorDistribution gumbel(double location, double scale, std::string name = "gumbel");

  const std::string& name() const { return name_; }
  const std::string& key() const { return key_; }

  double pdf(double t) const;
  double cdf(double t) const;
  double sf(double t) const;
  /// f'(t).
  double pdf_deriv(double t) const;
  double hazard(double t) const { return pdf(t) / sf(t); }
  /// d/dt log hazard = f'/f + f/S.
  double log_hazard_deriv(double t) const;
  double mean() const;
  double variance() const;
  double sample(Rng& rng) const;
  /// t with cdf(t) = prob, by bisection.
  double quantile(double prob) const;

 private:
  enum class Family { normal_mixture, extreme_value, gumbel };
  Family family_ = Family::normal_mixture;
  std::vector<double> weights_;
  std::vector<double> means_;
  std::vector<double> sds_;
  std::string name_;
  std::string key_;
};

struct CovariateDesign {
  double intercept = 2.0;
  VectorXd beta0 = (VectorXd(2) << 1.0, 1.0).finished();
  double bernoulli_p = 0.5;
  double normal_sd = 0.5;
  double truncation = 2.0;

  /// One draw of (X1, X2); X2 by rejection from the untruncated normal.
  VectorXd sample(Rng& rng) const;
  /// Deterministic quadrature over the covariate law: nodes (rows) and weights.
  void nodes(int n_points, MatrixXd& x, VectorXd& w) const;
  /// E[X2^2] of the truncated normal by direct numerical integration.
  double x2_second_moment() const;
};

/// Scale on which the uniform[0, c] censoring time is drawn.
///  log_time: C' = U c is already on the log scale (default).
///  time:     C = U c on the original scale, C' = log C.
enum class CensoringScale { log_time, time };

CensoringScale censoring_scale_from_string(std::string_view s);
const char* to_string(CensoringScale s);

struct SimDesign {
  int n = 400;
  ErrorDistribution error = ErrorDistribution::from_kind(ErrorKind::std_normal);
  int n_reps = 500;
  double censor_rate_target = 0.25;
  /// -1 selects the default policy: 1 interior knot below n = 500, 2 from there on.
  int n_interior_knots = -1;
  std::uint64_t seed = 1;
  CensoringScale censoring = CensoringScale::log_time;
  CovariateDesign covariates;
  int calibration_draws = 1'000'000;
  FitConfig fit;
  /// 0 = from AFT_SIEVE_THREADS or hardware concurrency.
  int threads = 0;

  int interior_knots() const;
  void validate() const;
};

/// Simulated dataset on the log scale; censor_c = +inf disables censoring.
Dataset gen_dataset(const SimDesign& design, double censor_c, Rng& rng);

/// Monte Carlo censoring rate for a given c with common random numbers.
class CensoringCalibrator {
 public:
  CensoringCalibrator(const ErrorDistribution& error, const CovariateDesign& cov, CensoringScale scale,
                      int n_draws, Rng& rng);
  double rate(double c) const;
  /// Bisection on log c; throws when the target cannot be bracketed.
  double solve(double target) const;

 private:
  std::vector<double> event_times_;
  std::vector<double> uniforms_;
  CensoringScale scale_;
};

double calibrate_censoring(const ErrorDistribution& error, double target, Rng& rng,
                           CensoringScale scale = CensoringScale::log_time,
                           const CovariateDesign& cov = {}, int n_draws = 1'000'000);

/// Censoring probability P(C' < T') by quadrature.
double censoring_rate_exact(const ErrorDistribution& error, double c, CensoringScale scale,
                            const CovariateDesign& cov = {});
double calibrate_censoring_exact(const ErrorDistribution& error, double target, CensoringScale scale,
                                 const CovariateDesign& cov = {});

struct EfficiencyBound {
  double censor_c = 0.0;
  MatrixXd information;  // I(beta0), per observation
  VectorXd sigma_star;   // sqrt(diag(I^{-1}) / n)
};

/// I(beta0) = int f(t) g0'(t)^2 E[{X - m(t)}^{(x)2} G(t, X)] dt with
/// m(t) = E[X G(t, X)] / E[G(t, X)] and G the censoring survival of the residual.
EfficiencyBound efficiency_bound(const ErrorDistribution& error, int n, double censor_c,
                                 CensoringScale scale = CensoringScale::log_time,
                                 const CovariateDesign& cov = {});
/// Same, with c calibrated by quadrature to `target`.
EfficiencyBound efficiency_bound_at_rate(const ErrorDistribution& error, int n, double target,
                                         CensoringScale scale = CensoringScale::log_time,
                                         const CovariateDesign& cov = {});

struct ReplicationResult {
  bool ok = false;
  VectorXd beta;
  VectorXd see1;
  VectorXd see2;
  double censor_fraction = 0.0;
  int n_iter = 0;
  std::string failure;
};

struct ParameterSummary {
  std::string name;
  double truth = 0.0;
  double est = 0.0;
  double bias = 0.0;
  double se = 0.0;
  double see1 = 0.0;
  double cp1 = 0.0;
  double see2 = 0.0;
  double cp2 = 0.0;
  double sigma_star = 0.0;
  /// Empirical SE significantly below sigma* (one-sided z-test at 1%).
  bool below_bound = false;
};

struct SimulationSummary {
  std::string error_key;
  std::string error_name;
  int n = 0;
  int n_reps = 0;
  int n_failed = 0;
  int n_interior_knots = 0;
  std::uint64_t seed = 0;
  double censor_c = 0.0;
  double censor_rate_mean = 0.0;
  double censor_rate_min = 0.0;
  double censor_rate_max = 0.0;
  std::vector<ParameterSummary> params;
  std::vector<ReplicationResult> replications;
};

int resolve_thread_count(int requested);

/// Replications use independent mt19937_64 streams seeded from (seed, index).
ReplicationResult run_replication(const SimDesign& design, double censor_c, int index);
Rng replication_rng(std::uint64_t seed, int index);

SimulationSummary run_study(const SimDesign& design);

}  // namespace aft
