#pragma once

// Gauss-Legendre rules on [-1, 1] and piecewise integration over breakpoints.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>

#include "aft_sieve/errors.hpp"

namespace aft {

template <typename Scalar>
struct QuadratureRule {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> nodes;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weights;

  int n_points() const { return static_cast<int>(nodes.size()); }
};

/// n-point Gauss-Legendre rule, exact for polynomials of degree <= 2n - 1.
/// Roots of P_n by Newton iteration from the Chebyshev-like initial guess.
template <typename Scalar = double>
QuadratureRule<Scalar> gauss_legendre(int n_points) {
  if (n_points < 1 || n_points > 64) {
    throw InvalidArgument("gauss_legendre: n_points must be in [1, 64], got " +
                          std::to_string(n_points));
  }
  QuadratureRule<Scalar> rule;
  rule.nodes.resize(n_points);
  rule.weights.resize(n_points);
  const int n = n_points;
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    Scalar z = std::cos(std::numbers::pi_v<Scalar> * (Scalar(i) + Scalar(0.75)) / (Scalar(n) + Scalar(0.5)));
    Scalar deriv(0);
    for (int iter = 0; iter < 100; ++iter) {
      Scalar p1(1), p2(0);
      for (int j = 1; j <= n; ++j) {
        const Scalar p3 = p2;
        p2 = p1;
        p1 = ((Scalar(2 * j) - 1) * z * p2 - (Scalar(j) - 1) * p3) / Scalar(j);
      }
      deriv = Scalar(n) * (z * p1 - p2) / (z * z - 1);
      const Scalar z_old = z;
      z = z_old - p1 / deriv;
      if (std::abs(z - z_old) <= Scalar(1e-15)) {
        // one more pass for the derivative at the converged root
        p1 = 1;
        p2 = 0;
        for (int j = 1; j <= n; ++j) {
          const Scalar p3 = p2;
          p2 = p1;
          p1 = ((Scalar(2 * j) - 1) * z * p2 - (Scalar(j) - 1) * p3) / Scalar(j);
        }
        deriv = Scalar(n) * (z * p1 - p2) / (z * z - 1);
        break;
      }
    }
    const Scalar w = Scalar(2) / ((1 - z * z) * deriv * deriv);
    rule.nodes(i) = -z;
    rule.nodes(n - 1 - i) = z;
    rule.weights(i) = w;
    rule.weights(n - 1 - i) = w;
  }
  if (n % 2 == 1) rule.nodes(n / 2) = Scalar(0);
  return rule;
}

/// Calls visit(node, weight) for every quadrature node of the rule applied on
/// each piece of [lower, upper] cut at the breakpoints that fall strictly inside.
template <typename Scalar, typename Visitor>
void for_each_node(std::span<const Scalar> breakpoints, const QuadratureRule<Scalar>& rule,
                   Scalar lower, Scalar upper, Visitor&& visit) {
  if (!(lower < upper)) return;
  auto piece = [&](Scalar lo, Scalar hi) {
    const Scalar half = (hi - lo) / 2;
    const Scalar mid = (hi + lo) / 2;
    for (int k = 0; k < rule.n_points(); ++k) {
      visit(mid + half * rule.nodes(k), half * rule.weights(k));
    }
  };
  Scalar lo = lower;
  auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), lower);
  for (; it != breakpoints.end() && *it < upper; ++it) {
    piece(lo, *it);
    lo = *it;
  }
  piece(lo, upper);
}

/// Integral of f over [lower, upper], split at the breakpoints.
template <typename Scalar, typename F>
Scalar integrate_piecewise(F&& f, std::span<const Scalar> breakpoints,
                           const QuadratureRule<Scalar>& rule, Scalar lower, Scalar upper) {
  if (lower > upper) {
    throw InvalidArgument("integrate_piecewise: lower limit exceeds upper limit");
  }
  if (!std::is_sorted(breakpoints.begin(), breakpoints.end())) {
    throw InvalidArgument("integrate_piecewise: breakpoints must be sorted");
  }
  Scalar total(0);
  for_each_node<Scalar>(breakpoints, rule, lower, upper,
                        [&](Scalar s, Scalar w) { total += w * f(s); });
  if (!std::isfinite(total)) {
    throw NumericalError("integrate_piecewise: integrand produced a non-finite value");
  }
  return total;
}

}  // namespace aft
