#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace quarts {

namespace detail {

/// Banded LDL^T factorization of the pentadiagonal system
/// A = R + lambda * Q'Q on a uniform grid (spacing 1), where Q is the
/// second-difference map and R the natural-spline Gram matrix
/// (diagonal 2/3, off-diagonal 1/6). Bands are stored by offset.
struct SplineSystem {
  std::size_t m = 0;           ///< system size (n - 2 interior points)
  std::vector<double> d;       ///< LDL^T pivots
  std::vector<double> l1, l2;  ///< subdiagonals of unit L: l1[i] = L(i+1,i), l2[i] = L(i+2,i)

  explicit SplineSystem(std::size_t n, double lambda) : m(n - 2), d(m), l1(m, 0.0), l2(m, 0.0) {
    const double a0 = 2.0 / 3.0 + 6.0 * lambda;
    const double a1 = 1.0 / 6.0 - 4.0 * lambda;
    const double a2 = lambda;
    for (std::size_t i = 0; i < m; ++i) {
      double li1 = 0.0;
      double li2 = 0.0;
      if (i >= 2) li2 = a2 / d[i - 2];
      if (i >= 1) {
        double rhs = a1;
        if (i >= 2) rhs -= li2 * d[i - 2] * l1[i - 2];
        li1 = rhs / d[i - 1];
      }
      double pivot = a0;
      if (i >= 1) pivot -= li1 * li1 * d[i - 1];
      if (i >= 2) pivot -= li2 * li2 * d[i - 2];
      if (!(pivot > 0.0)) throw std::runtime_error("smoothing spline system lost definiteness");
      d[i] = pivot;
      if (i >= 1) l1[i - 1] = li1;
      if (i >= 2) l2[i - 2] = li2;
    }
  }

  /// Solves A x = b in place.
  void solve(std::vector<double>& b) const {
    for (std::size_t i = 0; i < m; ++i) {
      if (i >= 1) b[i] -= l1[i - 1] * b[i - 1];
      if (i >= 2) b[i] -= l2[i - 2] * b[i - 2];
    }
    for (std::size_t i = 0; i < m; ++i) b[i] /= d[i];
    for (std::size_t i = m; i-- > 0;) {
      if (i + 1 < m) b[i] -= l1[i] * b[i + 1];
      if (i + 2 < m) b[i] -= l2[i] * b[i + 2];
    }
  }

  /// trace(A^{-1} Q'Q) from the in-band entries of A^{-1}, computed by the
  /// backward recurrence on the LDL^T factors; only entries within the
  /// bandwidth are needed because Q'Q shares the band.
  [[nodiscard]] double trace_inverse_times_penta() const {
    std::vector<double> z0(m, 0.0);  // Z(i, i)
    std::vector<double> z1(m, 0.0);  // Z(i, i+1)
    std::vector<double> z2(m, 0.0);  // Z(i, i+2)
    for (std::size_t i = m; i-- > 0;) {
      double a = i + 1 < m ? l1[i] : 0.0;
      double b = i + 2 < m ? l2[i] : 0.0;
      if (i + 2 < m) z2[i] = -(a * z1[i + 1] + b * z0[i + 2]);
      if (i + 1 < m) z1[i] = -(a * z0[i + 1] + b * z1[i + 1]);
      z0[i] = 1.0 / d[i] - a * z1[i] - b * z2[i];
    }
    double trace = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      trace += 6.0 * z0[i];
      if (i + 1 < m) trace += 2.0 * -4.0 * z1[i];
      if (i + 2 < m) trace += 2.0 * 1.0 * z2[i];
    }
    return trace;
  }
};

}  // namespace detail

/**
 * @brief Natural cubic smoothing spline fit at a fixed penalty on a uniform grid.
 *
 * Solves (R + lambda Q'Q) gamma = Q'y and returns y - lambda Q gamma, the
 * classic two-band formulation; cost is linear in the length.
 */
[[nodiscard]] inline std::vector<double> smoothing_spline_apply(std::span<const double> values,
                                                                double lambda) {
  const std::size_t n = values.size();
  if (n < 4) throw std::invalid_argument("smoothing spline needs at least 4 points");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("smoothing penalty must be positive and finite");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("smoothing spline: non-finite value");
  }
  const std::size_t m = n - 2;
  std::vector<double> gamma(m);
  for (std::size_t j = 0; j < m; ++j) gamma[j] = values[j] - 2.0 * values[j + 1] + values[j + 2];
  detail::SplineSystem sys(n, lambda);
  sys.solve(gamma);
  std::vector<double> fitted(values.begin(), values.end());
  for (std::size_t i = 0; i < n; ++i) {
    double qg = 0.0;
    if (i < m) qg += gamma[i];
    if (i >= 1 && i - 1 < m) qg -= 2.0 * gamma[i - 1];
    if (i >= 2 && i - 2 < m) qg += gamma[i - 2];
    fitted[i] -= lambda * qg;
  }
  return fitted;
}

/**
 * @brief Effective degrees of freedom trace(S_lambda) of the smoother.
 *
 * Equals n - lambda * trace((R + lambda Q'Q)^{-1} Q'Q); decreases
 * monotonically from n (no smoothing) to 2 (least-squares line).
 */
[[nodiscard]] inline double smoothing_spline_df(std::size_t n, double lambda) {
  if (n < 4) throw std::invalid_argument("smoothing spline needs at least 4 points");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("smoothing penalty must be positive and finite");
  }
  detail::SplineSystem sys(n, lambda);
  return static_cast<double>(n) - lambda * sys.trace_inverse_times_penta();
}

/// A smoothed series together with the penalty that realized it.
struct SmoothResult {
  std::vector<double> fitted;
  double lambda = 0.0;
  double achieved_df = 0.0;
};

/**
 * @brief Smooths a uniformly spaced series to a requested effective df.
 *
 * The penalty is found by bisection on log(lambda) until the smoother trace
 * is within 0.01 of the target. A target at or above n returns the input
 * unchanged; the smallest reachable target is 2 (a straight line).
 *
 * @throws std::invalid_argument for fewer than 4 points or a target below 2.
 */
[[nodiscard]] inline SmoothResult smooth_to_df(std::span<const double> values,
                                               double effective_df) {
  const std::size_t n = values.size();
  if (n < 4) throw std::invalid_argument("smoothing spline needs at least 4 points");
  if (!(effective_df >= 2.0)) {
    throw std::invalid_argument("effective df must be at least 2; got " +
                                std::to_string(effective_df));
  }
  SmoothResult out;
  if (effective_df >= static_cast<double>(n) - 1e-9) {
    out.fitted.assign(values.begin(), values.end());
    out.lambda = 0.0;
    out.achieved_df = static_cast<double>(n);
    return out;
  }

  double lo = 1e-12;
  double hi = 1.0;
  while (smoothing_spline_df(n, hi) > effective_df && hi < 1e18) hi *= 16.0;
  for (int it = 0; it < 300; ++it) {
    double mid = std::sqrt(lo * hi);
    double df = smoothing_spline_df(n, mid);
    if (std::abs(df - effective_df) <= 0.01) {
      lo = hi = mid;
      break;
    }
    if (df > effective_df) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  out.lambda = std::sqrt(lo * hi);
  out.achieved_df = smoothing_spline_df(n, out.lambda);
  out.fitted = smoothing_spline_apply(values, out.lambda);
  return out;
}

}  // namespace quarts
