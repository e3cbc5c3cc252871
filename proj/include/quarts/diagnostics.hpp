#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "quarts/special.hpp"

namespace quarts {

/**
 * @brief Sample autocorrelation function with the total-sum-of-squares denominator.
 *
 * Returns a vector indexed by lag, length max_lag + 1, with acf[0] == 1.
 * @throws std::invalid_argument if the series is shorter than max_lag + 1
 *         or has zero variance.
 */
[[nodiscard]] inline std::vector<double> acf(std::span<const double> series, std::size_t max_lag) {
  std::size_t n = series.size();
  if (n < 2) throw std::invalid_argument("acf requires at least two observations");
  if (max_lag + 1 > n) throw std::invalid_argument("acf max_lag must be smaller than the length");
  double mean = 0.0;
  for (double x : series) mean += x;
  mean /= static_cast<double>(n);
  double denom = 0.0;
  for (double x : series) denom += (x - mean) * (x - mean);
  if (denom <= 0.0) throw std::invalid_argument("acf undefined for a zero-variance series");
  std::vector<double> out(max_lag + 1, 0.0);
  out[0] = 1.0;
  for (std::size_t k = 1; k <= max_lag; ++k) {
    double num = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) {
      num += (series[i] - mean) * (series[i + k] - mean);
    }
    out[k] = num / denom;
  }
  return out;
}

/**
 * @brief Partial autocorrelation function via the Durbin-Levinson recursion on the sample ACF.
 *
 * Returns a vector indexed by lag, length max_lag + 1, with pacf[0] == 1 by convention.
 * @throws std::runtime_error if the recursion breaks down (prediction variance below 1e-12).
 */
[[nodiscard]] inline std::vector<double> pacf(std::span<const double> series, std::size_t max_lag) {
  std::vector<double> r = acf(series, max_lag);
  std::vector<double> out(max_lag + 1, 0.0);
  out[0] = 1.0;
  if (max_lag == 0) return out;
  std::vector<double> prev(max_lag + 1, 0.0), cur(max_lag + 1, 0.0);
  out[1] = r[1];
  prev[1] = r[1];
  double v = 1.0 - r[1] * r[1];
  for (std::size_t k = 2; k <= max_lag; ++k) {
    if (std::abs(v) < 1e-12) {
      throw std::runtime_error("pacf recursion breakdown at lag " + std::to_string(k));
    }
    double num = r[k];
    for (std::size_t j = 1; j < k; ++j) num -= prev[j] * r[k - j];
    double phi_kk = num / v;
    cur[k] = phi_kk;
    for (std::size_t j = 1; j < k; ++j) cur[j] = prev[j] - phi_kk * prev[k - j];
    v *= (1.0 - phi_kk * phi_kk);
    out[k] = phi_kk;
    std::copy(cur.begin(), cur.begin() + static_cast<std::ptrdiff_t>(k) + 1, prev.begin());
  }
  return out;
}

struct LjungBoxResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t lag = 0;
};

namespace detail {

/// Ljung-Box statistic from precomputed autocorrelations (index = lag).
[[nodiscard]] inline LjungBoxResult ljung_box_from_acf(std::span<const double> acf_values,
                                                       std::size_t n, std::size_t lag) {
  if (lag == 0) throw std::invalid_argument("Ljung-Box lag must be at least 1");
  if (acf_values.size() < lag + 1) {
    throw std::invalid_argument("Ljung-Box needs autocorrelations up to the requested lag");
  }
  if (n <= lag) throw std::invalid_argument("Ljung-Box requires series length > lag");
  double q = 0.0;
  for (std::size_t k = 1; k <= lag; ++k) {
    q += acf_values[k] * acf_values[k] / static_cast<double>(n - k);
  }
  q *= static_cast<double>(n) * (static_cast<double>(n) + 2.0);
  LjungBoxResult res;
  res.statistic = q;
  res.p_value = chi_squared_survival(q, static_cast<double>(lag));
  res.lag = lag;
  return res;
}

}  // namespace detail

/**
 * @brief Ljung-Box portmanteau test for serial correlation up to the given lag.
 *
 * The null distribution is chi-squared with `lag` degrees of freedom.
 */
[[nodiscard]] inline LjungBoxResult ljung_box(std::span<const double> series, std::size_t lag) {
  std::vector<double> r = acf(series, lag);
  return detail::ljung_box_from_acf(r, series.size(), lag);
}

struct AndersonDarlingResult {
  double statistic = 0.0;  ///< small-sample corrected A* squared
  double p_value = 1.0;
};

/**
 * @brief Anderson-Darling test of normality with estimated mean and variance.
 *
 * Applies the small-sample correction A*^2 = A^2 * (1 + 0.75/n + 2.25/n^2) and
 * the standard piecewise-exponential p-value approximation for that case.
 * @throws std::invalid_argument for n < 8 or a zero-variance sample.
 */
[[nodiscard]] inline AndersonDarlingResult anderson_darling_normal(std::span<const double> sample) {
  std::size_t n = sample.size();
  if (n < 8) throw std::invalid_argument("Anderson-Darling test requires at least 8 observations");
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw std::invalid_argument("Anderson-Darling undefined for zero variance");
  double a2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double lo = normal_cdf((x[i] - mean) / sd);
    double hi = normal_cdf((x[n - 1 - i] - mean) / sd);
    lo = std::clamp(lo, 1e-300, 1.0 - 1e-16);
    hi = std::clamp(hi, 1e-300, 1.0 - 1e-16);
    a2 += (2.0 * static_cast<double>(i) + 1.0) * (std::log(lo) + std::log1p(-hi));
  }
  a2 = -static_cast<double>(n) - a2 / static_cast<double>(n);
  double nd = static_cast<double>(n);
  double a2c = a2 * (1.0 + 0.75 / nd + 2.25 / (nd * nd));
  double p;
  if (a2c >= 0.6) {
    p = std::exp(1.2937 - 5.709 * a2c + 0.0186 * a2c * a2c);
  } else if (a2c > 0.34) {
    p = std::exp(0.9177 - 4.279 * a2c - 1.38 * a2c * a2c);
  } else if (a2c > 0.2) {
    p = 1.0 - std::exp(-8.318 + 42.796 * a2c - 59.938 * a2c * a2c);
  } else {
    p = 1.0 - std::exp(-13.436 + 101.14 * a2c - 223.73 * a2c * a2c);
  }
  AndersonDarlingResult res;
  res.statistic = a2c;
  res.p_value = std::clamp(p, 0.0, 1.0);
  return res;
}

struct DiagnosticsConfig {
  std::size_t max_lag = 0;      ///< 0 selects min(20, n - 1)
  std::size_t ljung_box_lag = 0;  ///< 0 selects min(10, n / 5), at least 1
  double significance = 0.05;
};

/**
 * @brief Serial-correlation and normality diagnostics of an innovation sample.
 */
struct DiagnosticsReport {
  std::vector<double> acf;
  std::vector<double> pacf;
  LjungBoxResult ljung_box;
  AndersonDarlingResult anderson_darling;
  bool ar_behavior_detected = false;
  std::vector<double> sample;
};

/// Builds the full diagnostics report; the AR flag is the Ljung-Box decision.
[[nodiscard]] inline DiagnosticsReport compute_diagnostics(std::span<const double> sample,
                                                           const DiagnosticsConfig& config = {}) {
  std::size_t n = sample.size();
  if (n < 8) throw std::invalid_argument("diagnostics require at least 8 observations");
  std::size_t max_lag = config.max_lag != 0 ? config.max_lag : std::min<std::size_t>(20, n - 1);
  std::size_t lb_lag =
      config.ljung_box_lag != 0 ? config.ljung_box_lag : std::max<std::size_t>(1, std::min<std::size_t>(10, n / 5));
  if (!(config.significance > 0.0 && config.significance < 1.0)) {
    throw std::invalid_argument("diagnostics significance must lie in (0, 1)");
  }
  DiagnosticsReport rep;
  rep.acf = acf(sample, std::max(max_lag, lb_lag));
  rep.pacf = pacf(sample, max_lag);
  rep.ljung_box = detail::ljung_box_from_acf(rep.acf, n, lb_lag);
  rep.anderson_darling = anderson_darling_normal(sample);
  rep.ar_behavior_detected = rep.ljung_box.p_value < config.significance;
  rep.sample.assign(sample.begin(), sample.end());
  rep.acf.resize(max_lag + 1);
  return rep;
}

}  // namespace quarts
