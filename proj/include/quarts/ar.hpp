#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "quarts/types.hpp"

namespace quarts {

/**
 * @brief Largest companion-matrix eigenvalue modulus of an AR polynomial.
 *
 * The process is stationary when this is strictly below 1.
 */
[[nodiscard]] inline double ar_max_root_modulus(std::span<const double> phi) {
  std::size_t q = phi.size();
  if (q == 0) return 0.0;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q),
                                                    static_cast<Eigen::Index>(q));
  for (std::size_t k = 0; k < q; ++k) companion(0, static_cast<Eigen::Index>(k)) = phi[k];
  for (std::size_t k = 1; k < q; ++k) {
    companion(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1)) = 1.0;
  }
  Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Stationarity check with the numeric margin used throughout the library.
[[nodiscard]] inline bool ar_is_stationary(std::span<const double> phi, double margin = 1e-8) {
  for (double v : phi) {
    if (!std::isfinite(v)) return false;
  }
  return ar_max_root_modulus(phi) < 1.0 - margin;
}

/**
 * @brief Autoregressive coefficients together with the quantile level they were fit under.
 */
struct ArCoefficients {
  std::vector<double> phi;
  double tau = 0.5;

  ArCoefficients() = default;
  ArCoefficients(std::vector<double> coefficients, double quantile)
      : phi(std::move(coefficients)), tau(QuantileLevel(quantile).value()) {
    for (double v : phi) {
      if (!std::isfinite(v)) throw std::invalid_argument("AR coefficients must be finite");
    }
  }

  [[nodiscard]] std::size_t order() const noexcept { return phi.size(); }
  [[nodiscard]] bool stationary(double margin = 1e-8) const { return ar_is_stationary(phi, margin); }
  [[nodiscard]] double max_root_modulus() const { return ar_max_root_modulus(phi); }
};

/**
 * @brief Quasi-difference filter: out[i - q] = s[i] - sum_{k=1..q} phi_k * s[i - k]
 *        for i in [q, n), i.e. applies the AR polynomial to the series.
 *
 * Output length is n - q.
 * @throws std::invalid_argument if the series is not longer than the AR order.
 */
[[nodiscard]] inline std::vector<double> quasi_difference(std::span<const double> series,
                                                          std::span<const double> phi) {
  std::size_t n = series.size();
  std::size_t q = phi.size();
  if (n <= q) throw std::invalid_argument("quasi_difference needs series longer than the AR order");
  std::vector<double> out(n - q);
  for (std::size_t i = q; i < n; ++i) {
    double v = series[i];
    for (std::size_t k = 0; k < q; ++k) v -= phi[k] * series[i - k - 1];
    out[i - q] = v;
  }
  return out;
}

/**
 * @brief Inverse of quasi_difference: rebuilds the series from its first q
 *        values and the differenced tail.
 */
[[nodiscard]] inline std::vector<double> un_difference(std::span<const double> differenced,
                                                       std::span<const double> head,
                                                       std::span<const double> phi) {
  if (head.size() != phi.size()) {
    throw std::invalid_argument("un_difference head must have exactly q values");
  }
  std::size_t q = phi.size();
  std::vector<double> out(head.begin(), head.end());
  out.reserve(q + differenced.size());
  for (std::size_t j = 0; j < differenced.size(); ++j) {
    double v = differenced[j];
    std::size_t i = q + j;
    for (std::size_t k = 0; k < q; ++k) v += phi[k] * out[i - k - 1];
    out.push_back(v);
  }
  return out;
}

/**
 * @brief Simulates a stationary AR path driven by the given innovations.
 *
 * The recursion starts from zero initial values; the first burn_in outputs are
 * discarded, so the returned length is innovations.size() - burn_in.
 * @throws std::invalid_argument if the coefficients are non-stationary or the
 *         innovation stream is not longer than burn_in.
 */
[[nodiscard]] inline std::vector<double> simulate_stationary(std::span<const double> phi,
                                                             std::span<const double> innovations,
                                                             std::size_t burn_in) {
  if (!ar_is_stationary(phi)) {
    throw std::invalid_argument("simulate_stationary requires stationary AR coefficients");
  }
  if (innovations.size() <= burn_in) {
    throw std::invalid_argument("simulate_stationary needs more innovations than burn_in");
  }
  std::size_t q = phi.size();
  std::vector<double> state(q, 0.0);
  std::vector<double> out;
  out.reserve(innovations.size() - burn_in);
  for (std::size_t i = 0; i < innovations.size(); ++i) {
    double v = innovations[i];
    for (std::size_t k = 0; k < q && k < state.size(); ++k) v += phi[k] * state[k];
    if (q > 0) {
      for (std::size_t k = q - 1; k > 0; --k) state[k] = state[k - 1];
      state[0] = v;
    }
    if (i >= burn_in) out.push_back(v);
  }
  return out;
}

/**
 * @brief Propagates the AR recursion forward in mean: each step applies the
 *        coefficients to the trailing residual values and adds the innovation mean.
 *
 * `history` supplies the last q residuals (oldest first); returns `horizon`
 * propagated values.
 */
[[nodiscard]] inline std::vector<double> propagate_mean(std::span<const double> phi,
                                                        std::span<const double> history,
                                                        double innovation_mean,
                                                        std::size_t horizon) {
  std::size_t q = phi.size();
  if (history.size() < q) {
    throw std::invalid_argument("propagate_mean needs at least q history values");
  }
  std::vector<double> tail(history.end() - static_cast<std::ptrdiff_t>(q), history.end());
  std::vector<double> out;
  out.reserve(horizon);
  for (std::size_t j = 0; j < horizon; ++j) {
    double v = innovation_mean;
    for (std::size_t k = 0; k < q; ++k) v += phi[k] * tail[q - 1 - k];
    out.push_back(v);
    if (q > 0) {
      tail.erase(tail.begin());
      tail.push_back(v);
    }
  }
  return out;
}

}  // namespace quarts
