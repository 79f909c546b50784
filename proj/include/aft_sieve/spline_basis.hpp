#pragma once

// Clamped B-spline bases on a bounded interval [a, b].
//
// A basis of order p (degree p - 1) with K interior knots has q = K + p
// functions. The extended knot sequence repeats each boundary p times, so the
// basis forms a partition of unity on [a, b] and reproduces every polynomial
// of degree < p. Evaluation uses the Cox-de Boor triangular scheme with the
// usual knot-difference recurrence for derivatives.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aft_sieve/errors.hpp"

namespace aft {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

enum class KnotPlacement { equal_spaced, residual_quantiles };

template <typename Scalar>
class KnotVector {
 public:
  KnotVector(Scalar lower, Scalar upper, std::vector<Scalar> interior, int order)
      : lower_(lower), upper_(upper), interior_(std::move(interior)), order_(order) {
    if (!(lower_ < upper_)) {
      throw InvalidArgument("knot vector: degenerate interval, need a < b");
    }
    if (order_ < 1) {
      throw InvalidArgument("knot vector: spline order must be >= 1");
    }
    Scalar prev = lower_;
    for (const Scalar& t : interior_) {
      if (!(t > prev)) {
        throw InvalidArgument("knot vector: interior knots must be strictly increasing inside (a, b)");
      }
      prev = t;
    }
    if (!(prev < upper_)) {
      throw InvalidArgument("knot vector: interior knots must lie strictly inside (a, b)");
    }
    sequence_.reserve(interior_.size() + 2 * static_cast<std::size_t>(order_));
    sequence_.insert(sequence_.end(), order_, lower_);
    sequence_.insert(sequence_.end(), interior_.begin(), interior_.end());
    sequence_.insert(sequence_.end(), order_, upper_);
  }

  Scalar lower() const { return lower_; }
  Scalar upper() const { return upper_; }
  int order() const { return order_; }
  int degree() const { return order_ - 1; }
  int n_interior() const { return static_cast<int>(interior_.size()); }
  const std::vector<Scalar>& interior() const { return interior_; }

  /// Full clamped sequence, length K + 2p.
  const std::vector<Scalar>& sequence() const { return sequence_; }

  /// {a, t_1, ..., t_K, b}: the points where the spline pieces join.
  std::vector<Scalar> breakpoints() const {
    std::vector<Scalar> out;
    out.reserve(interior_.size() + 2);
    out.push_back(lower_);
    out.insert(out.end(), interior_.begin(), interior_.end());
    out.push_back(upper_);
    return out;
  }

 private:
  Scalar lower_;
  Scalar upper_;
  std::vector<Scalar> interior_;
  int order_;
  std::vector<Scalar> sequence_;
};

namespace detail {

// Type-7 sample quantile (linear interpolation between order statistics).
template <typename Scalar>
Scalar sample_quantile(const std::vector<Scalar>& sorted, double prob) {
  const double pos = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const Scalar frac = static_cast<Scalar>(pos - static_cast<double>(lo));
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

/// Interior knots for [lower, upper]. Equal spacing puts t_j = a + j(b - a)/(K + 1);
/// quantile placement uses the j/(K + 1) sample quantiles of `residuals`.
template <typename Scalar>
KnotVector<Scalar> build_knots(Scalar lower, Scalar upper, int n_interior, int order,
                               KnotPlacement placement = KnotPlacement::equal_spaced,
                               std::span<const Scalar> residuals = {}) {
  if (!(lower < upper)) {
    throw InvalidArgument("build_knots: degenerate interval, need a < b");
  }
  if (n_interior < 0) {
    throw InvalidArgument("build_knots: negative interior knot count");
  }
  std::vector<Scalar> interior;
  interior.reserve(static_cast<std::size_t>(n_interior));
  const Scalar width = upper - lower;
  if (placement == KnotPlacement::equal_spaced) {
    for (int j = 1; j <= n_interior; ++j) {
      interior.push_back(lower + width * static_cast<Scalar>(j) / static_cast<Scalar>(n_interior + 1));
    }
    return KnotVector<Scalar>(lower, upper, std::move(interior), order);
  }

  if (residuals.empty()) {
    throw InvalidArgument("build_knots: quantile placement needs residuals");
  }
  std::vector<Scalar> sorted(residuals.begin(), residuals.end());
  std::sort(sorted.begin(), sorted.end());
  const Scalar eps = Scalar(1e-8) * width;
  Scalar prev = lower;
  for (int j = 1; j <= n_interior; ++j) {
    Scalar t = detail::sample_quantile(sorted, static_cast<double>(j) / (n_interior + 1));
    if (!(t > prev)) t = prev + eps;
    if (!(t < upper)) {
      throw InvalidArgument("build_knots: residual quantiles collapse, cannot place " +
                            std::to_string(n_interior) + " distinct interior knots");
    }
    interior.push_back(t);
    prev = t;
  }
  return KnotVector<Scalar>(lower, upper, std::move(interior), order);
}

/// Nonzero basis values (and derivatives) at one point: row k holds the k-th
/// derivative of B_first, ..., B_{first + p - 1}.
template <typename Scalar>
struct LocalBasis {
  int first = 0;
  Matrix<Scalar> ders;
};

template <typename Scalar>
class SplineBasis {
 public:
  explicit SplineBasis(KnotVector<Scalar> knots) : knots_(std::move(knots)) {}

  const KnotVector<Scalar>& knots() const { return knots_; }
  int order() const { return knots_.order(); }
  int size() const { return knots_.n_interior() + knots_.order(); }
  Scalar lower() const { return knots_.lower(); }
  Scalar upper() const { return knots_.upper(); }

  /// Maps t into [a, b], absorbing floating-point overshoot of at most 1e-12
  /// (relative to the interval scale); anything further out is an error.
  Scalar clamp_to_domain(Scalar t) const {
    using std::abs;
    using std::max;
    const Scalar scale = max(Scalar(1), max(abs(lower()), abs(upper())));
    const Scalar slack = Scalar(1e-12) * scale;
    if (t < lower()) {
      if (lower() - t > slack) throw DomainError("spline basis: t below domain [a, b]");
      return lower();
    }
    if (t > upper()) {
      if (t - upper() > slack) throw DomainError("spline basis: t above domain [a, b]");
      return upper();
    }
    return t;
  }

  /// Index i into the knot sequence with U[i] <= t < U[i+1]; the last span is
  /// closed on the right.
  int find_span(Scalar t) const {
    const auto& seq = knots_.sequence();
    const int deg = knots_.degree();
    const int last = size() - 1;
    if (t >= seq[static_cast<std::size_t>(last + 1)]) return last;
    auto it = std::upper_bound(seq.begin() + deg, seq.begin() + last + 1, t);
    return static_cast<int>(it - seq.begin()) - 1;
  }

  /// Fills `out` with the basis values and the first `n_deriv` derivatives of
  /// the p functions that are nonzero at t.
  void eval_local(Scalar t, int n_deriv, LocalBasis<Scalar>& out) const {
    const int deg = knots_.degree();
    const int p = order();
    if (n_deriv < 0 || n_deriv > deg) {
      throw InvalidArgument("spline basis: derivative order " + std::to_string(n_deriv) +
                            " unsupported for order " + std::to_string(p));
    }
    t = clamp_to_domain(t);
    const int span = find_span(t);
    const auto& U = knots_.sequence();
    out.first = span - deg;
    out.ders.setZero(n_deriv + 1, p);

    Matrix<Scalar> ndu(p, p);
    Vector<Scalar> left(p), right(p);
    ndu(0, 0) = Scalar(1);
    for (int j = 1; j <= deg; ++j) {
      left(j) = t - U[static_cast<std::size_t>(span + 1 - j)];
      right(j) = U[static_cast<std::size_t>(span + j)] - t;
      Scalar saved(0);
      for (int r = 0; r < j; ++r) {
        ndu(j, r) = right(r + 1) + left(j - r);
        const Scalar temp = ndu(r, j - 1) / ndu(j, r);
        ndu(r, j) = saved + right(r + 1) * temp;
        saved = left(j - r) * temp;
      }
      ndu(j, j) = saved;
    }
    for (int j = 0; j <= deg; ++j) out.ders(0, j) = ndu(j, deg);
    if (n_deriv == 0) return;

    Matrix<Scalar> a(2, p);
    for (int r = 0; r <= deg; ++r) {
      int s1 = 0;
      int s2 = 1;
      a.setZero();
      a(0, 0) = Scalar(1);
      for (int k = 1; k <= n_deriv; ++k) {
        Scalar d(0);
        const int rk = r - k;
        const int pk = deg - k;
        if (r >= k) {
          a(s2, 0) = a(s1, 0) / ndu(pk + 1, rk);
          d = a(s2, 0) * ndu(rk, pk);
        }
        const int j1 = rk >= -1 ? 1 : -rk;
        const int j2 = (r - 1 <= pk) ? k - 1 : deg - r;
        for (int j = j1; j <= j2; ++j) {
          a(s2, j) = (a(s1, j) - a(s1, j - 1)) / ndu(pk + 1, rk + j);
          d += a(s2, j) * ndu(rk + j, pk);
        }
        if (r <= pk) {
          a(s2, k) = -a(s1, k - 1) / ndu(pk + 1, r);
          d += a(s2, k) * ndu(r, pk);
        }
        out.ders(k, r) = d;
        std::swap(s1, s2);
      }
    }
    Scalar factor = static_cast<Scalar>(deg);
    for (int k = 1; k <= n_deriv; ++k) {
      out.ders.row(k) *= factor;
      factor *= static_cast<Scalar>(deg - k);
    }
  }

  /// Greville abscissae: coefficients that make sum_j c_j B_j(t) = t.
  Vector<Scalar> greville() const {
    const auto& U = knots_.sequence();
    const int p = order();
    Vector<Scalar> out(size());
    for (int j = 0; j < size(); ++j) {
      if (p == 1) {
        out(j) = (U[static_cast<std::size_t>(j)] + U[static_cast<std::size_t>(j + 1)]) / Scalar(2);
        continue;
      }
      Scalar s(0);
      for (int k = 1; k < p; ++k) s += U[static_cast<std::size_t>(j + k)];
      out(j) = s / static_cast<Scalar>(p - 1);
    }
    return out;
  }

 private:
  KnotVector<Scalar> knots_;
};

/// Dense vector (B_1(t), ..., B_q(t)).
template <typename Scalar>
Vector<Scalar> eval_basis(const SplineBasis<Scalar>& basis, Scalar t) {
  LocalBasis<Scalar> local;
  basis.eval_local(t, 0, local);
  Vector<Scalar> out = Vector<Scalar>::Zero(basis.size());
  out.segment(local.first, basis.order()) = local.ders.row(0).transpose();
  return out;
}

/// Dense vector of k-th derivatives; requires 1 <= k < p.
template <typename Scalar>
Vector<Scalar> eval_basis_deriv(const SplineBasis<Scalar>& basis, Scalar t, int deriv_order) {
  if (deriv_order < 1 || deriv_order >= basis.order()) {
    throw InvalidArgument("eval_basis_deriv: derivative order must satisfy 1 <= k < p");
  }
  LocalBasis<Scalar> local;
  basis.eval_local(t, deriv_order, local);
  Vector<Scalar> out = Vector<Scalar>::Zero(basis.size());
  out.segment(local.first, basis.order()) = local.ders.row(deriv_order).transpose();
  return out;
}

/// s(t) = sum_j gamma_j B_j(t).
template <typename Scalar>
class SplineFunction {
 public:
  SplineFunction(SplineBasis<Scalar> basis, Vector<Scalar> coefficients)
      : basis_(std::move(basis)), coefficients_(std::move(coefficients)) {
    if (coefficients_.size() != basis_.size()) {
      throw InvalidArgument("spline function: coefficient count " +
                            std::to_string(coefficients_.size()) + " does not match basis size " +
                            std::to_string(basis_.size()));
    }
  }

  const SplineBasis<Scalar>& basis() const { return basis_; }
  const Vector<Scalar>& coefficients() const { return coefficients_; }
  Vector<Scalar>& coefficients() { return coefficients_; }

  bool within_bound(Scalar bound) const {
    return coefficients_.cwiseAbs().maxCoeff() <= bound;
  }

 private:
  SplineBasis<Scalar> basis_;
  Vector<Scalar> coefficients_;
};

template <typename Scalar>
Scalar eval_spline(const SplineFunction<Scalar>& f, Scalar t) {
  LocalBasis<Scalar> local;
  f.basis().eval_local(t, 0, local);
  return local.ders.row(0).dot(f.coefficients().segment(local.first, f.basis().order()));
}

template <typename Scalar>
Scalar eval_spline_deriv(const SplineFunction<Scalar>& f, Scalar t, int deriv_order = 1) {
  if (deriv_order < 1 || deriv_order >= f.basis().order()) {
    throw InvalidArgument("eval_spline_deriv: derivative order must satisfy 1 <= k < p");
  }
  LocalBasis<Scalar> local;
  f.basis().eval_local(t, deriv_order, local);
  return local.ders.row(deriv_order).dot(f.coefficients().segment(local.first, f.basis().order()));
}

using KnotVectord = KnotVector<double>;
using SplineBasisd = SplineBasis<double>;
using SplineFunctiond = SplineFunction<double>;

}  // namespace aft
