#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace quarts {

namespace detail {

/// Series expansion of the lower regularized incomplete gamma P(a, x), valid for x < a + 1.
inline double gamma_p_series(double a, double x) {
  constexpr int max_iter = 500;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < max_iter; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * eps) {
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
  }
  throw std::runtime_error("incomplete gamma series failed to converge");
}

/// Continued fraction for the upper regularized incomplete gamma Q(a, x), valid for x >= a + 1.
inline double gamma_q_continued_fraction(double a, double x) {
  constexpr int max_iter = 500;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= max_iter; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) {
      return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
  }
  throw std::runtime_error("incomplete gamma continued fraction failed to converge");
}

}  // namespace detail

/**
 * @brief Lower regularized incomplete gamma function P(a, x).
 * @throws std::invalid_argument for a <= 0 or x < 0.
 */
[[nodiscard]] inline double gamma_p(double a, double x) {
  if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("gamma_p requires a > 0");
  if (x < 0.0 || !std::isfinite(x)) throw std::invalid_argument("gamma_p requires x >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_continued_fraction(a, x);
}

/// Upper regularized incomplete gamma function Q(a, x) = 1 - P(a, x).
[[nodiscard]] inline double gamma_q(double a, double x) {
  if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("gamma_q requires a > 0");
  if (x < 0.0 || !std::isfinite(x)) throw std::invalid_argument("gamma_q requires x >= 0");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_continued_fraction(a, x);
}

/**
 * @brief Survival function of the chi-squared distribution with df degrees of freedom.
 * @throws std::invalid_argument for df <= 0 or x < 0.
 */
[[nodiscard]] inline double chi_squared_survival(double x, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("chi-squared df must be positive");
  return gamma_q(df / 2.0, x / 2.0);
}

/// Standard normal cumulative distribution function.
[[nodiscard]] inline double normal_cdf(double x) noexcept {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2_v<double>);
}

/**
 * @brief Standard normal quantile function (inverse CDF), rational approximation
 *        accurate to about 1e-15 over (0, 1).
 * @throws std::invalid_argument for p outside (0, 1).
 */
[[nodiscard]] inline double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0)) {
    throw std::invalid_argument("normal_quantile requires p strictly inside (0, 1)");
  }
  double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    double r = 0.180625 - q * q;
    double num = (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                       6.7265770927008700853e+4) *
                          r +
                      4.5921953931549871457e+4) *
                         r +
                     1.3731693765509461125e+4) *
                        r +
                    1.9715909503065514427e+3) *
                       r +
                   1.3314166789178437745e+2) *
                      r +
                  3.3871328727963666080e+0);
    double den = (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                       3.9307895800092710610e+4) *
                          r +
                      2.1213794301586595867e+4) *
                         r +
                     5.3941960214247511077e+3) *
                        r +
                    6.8718700749205790830e+2) *
                       r +
                   4.2313330701600911252e+1) *
                      r +
                  1.0);
    return q * num / den;
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    double num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                       2.41780725177450611770e-1) *
                          r +
                      1.27045825245236838258e+0) *
                         r +
                     3.64784832476320460504e+0) *
                        r +
                    5.76949722146069140550e+0) *
                       r +
                   4.63033784615654529590e+0) *
                      r +
                  1.42343711074968357734e+0);
    double den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                       1.51986665636164571966e-2) *
                          r +
                      1.48103976427480074590e-1) *
                         r +
                     6.89767334985100004550e-1) *
                        r +
                    1.67638483018380384940e+0) *
                       r +
                   2.05319162663775882187e+0) *
                      r +
                  1.0);
    val = num / den;
  } else {
    r -= 5.0;
    double num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                       1.24266094738807843860e-3) *
                          r +
                      2.65321895265761230930e-2) *
                         r +
                     2.96560571828504891230e-1) *
                        r +
                    1.78482653991729133580e+0) *
                       r +
                   5.46378491116411436990e+0) *
                      r +
                  6.65790464350110377720e+0);
    double den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                       1.84631831751005468180e-5) *
                          r +
                      7.86869131145613259100e-4) *
                         r +
                     1.48753612908506148525e-2) *
                        r +
                    1.36929880922735805310e-1) *
                       r +
                   5.99832206555887937690e-1) *
                      r +
                  1.0);
    val = num / den;
  }
  return q < 0.0 ? -val : val;
}

}  // namespace quarts
