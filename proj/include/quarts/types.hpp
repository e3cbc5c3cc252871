#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace quarts {

/**
 * @brief Quantile level constrained to the open interval (0, 1).
 * @throws std::invalid_argument if the value is outside (0, 1) or not finite.
 */
class QuantileLevel {
 public:
  explicit QuantileLevel(double tau) : tau_(tau) {
    if (!std::isfinite(tau) || tau <= 0.0 || tau >= 1.0) {
      throw std::invalid_argument("quantile level must lie strictly between 0 and 1, got " +
                                  std::to_string(tau));
    }
  }

  [[nodiscard]] double value() const noexcept { return tau_; }

  friend bool operator==(QuantileLevel a, QuantileLevel b) noexcept { return a.tau_ == b.tau_; }

 private:
  double tau_;
};

/**
 * @brief Check (pinball) loss: tau * x for x >= 0, (tau - 1) * x for x < 0.
 *
 * Nonnegative, zero exactly at x = 0, piecewise linear with a kink at zero.
 */
[[nodiscard]] inline double check_loss(double x, double tau) noexcept {
  return x >= 0.0 ? tau * x : (tau - 1.0) * x;
}

[[nodiscard]] inline double check_loss(double x, QuantileLevel tau) noexcept {
  return check_loss(x, tau.value());
}

/// Sum of check losses over a range of values.
[[nodiscard]] inline double check_loss_sum(std::span<const double> xs, double tau) noexcept {
  double s = 0.0;
  for (double x : xs) s += check_loss(x, tau);
  return s;
}

/**
 * @brief Density of the asymmetric Laplace distribution with location 0,
 *        asymmetry tau and scale b: tau*(1-tau)/b * exp(-check_loss(z, tau)/b).
 *
 * Its tau-th quantile is exactly zero.
 * @throws std::invalid_argument if b <= 0.
 */
[[nodiscard]] inline double asymmetric_laplace_density(double z, double tau, double b) {
  QuantileLevel check_tau(tau);
  if (!(b > 0.0) || !std::isfinite(b)) {
    throw std::invalid_argument("asymmetric Laplace scale must be positive");
  }
  return tau * (1.0 - tau) / b * std::exp(-check_loss(z, tau) / b);
}

/// Mean of the asymmetric Laplace distribution with location 0: b*(1-2*tau)/(tau*(1-tau)).
[[nodiscard]] inline double asymmetric_laplace_mean(double tau, double b) {
  QuantileLevel check_tau(tau);
  if (!(b > 0.0)) throw std::invalid_argument("asymmetric Laplace scale must be positive");
  return b * (1.0 - 2.0 * tau) / (tau * (1.0 - tau));
}

/**
 * @brief Ordered real series with integer time labels.
 *
 * Time labels must be strictly monotone; the orientation flag records whether
 * stored order runs with increasing labels (forward) or decreasing (reversed).
 * Values must be finite.
 */
struct Series {
  std::vector<double> values;
  std::vector<long> time;
  bool reversed = false;

  Series() = default;

  Series(std::vector<double> v, std::vector<long> t) : values(std::move(v)), time(std::move(t)) {
    if (values.size() != time.size()) {
      throw std::invalid_argument("series values and time labels differ in length");
    }
    if (values.empty()) throw std::invalid_argument("series must be non-empty");
    for (double x : values) {
      if (!std::isfinite(x)) throw std::invalid_argument("series contains a non-finite value");
    }
    if (time.size() > 1) {
      bool inc = time[1] > time[0];
      for (std::size_t i = 1; i < time.size(); ++i) {
        if (inc ? (time[i] <= time[i - 1]) : (time[i] >= time[i - 1])) {
          throw std::invalid_argument("series time labels must be strictly monotone");
        }
      }
      reversed = !inc;
    }
  }

  [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
};

/**
 * @brief Regression design matrix whose first column is the intercept column of ones.
 *
 * All entries must be finite; there must be more rows than columns. Column rank
 * is checked by the solvers, not here.
 */
class DesignMatrix {
 public:
  explicit DesignMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
    if (m_.rows() <= m_.cols()) {
      throw std::invalid_argument("design matrix needs more rows than columns");
    }
    if (!m_.allFinite()) throw std::invalid_argument("design matrix contains non-finite entries");
    for (Eigen::Index i = 0; i < m_.rows(); ++i) {
      if (m_(i, 0) != 1.0) {
        throw std::invalid_argument("design matrix first column must be all ones (intercept)");
      }
    }
  }

  /// Builds a design by prepending an intercept column to raw predictors.
  [[nodiscard]] static DesignMatrix with_intercept(const Eigen::MatrixXd& predictors) {
    Eigen::MatrixXd m(predictors.rows(), predictors.cols() + 1);
    m.col(0).setOnes();
    m.rightCols(predictors.cols()) = predictors;
    return DesignMatrix(std::move(m));
  }

  [[nodiscard]] const Eigen::MatrixXd& matrix() const noexcept { return m_; }
  [[nodiscard]] Eigen::Index rows() const noexcept { return m_.rows(); }
  [[nodiscard]] Eigen::Index cols() const noexcept { return m_.cols(); }

 private:
  Eigen::MatrixXd m_;
};

}  // namespace quarts
