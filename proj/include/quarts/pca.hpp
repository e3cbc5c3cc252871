#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "quarts/types.hpp"

namespace quarts {

/**
 * @brief Correlation-scale principal component transform.
 *
 * Columns are centered and scaled to unit sample variance before the
 * decomposition, so eigenvalues sum to the column count. Loading signs are
 * normalized so each component's largest-magnitude loading is positive.
 */
struct PcaTransform {
  Eigen::VectorXd column_means;
  Eigen::VectorXd column_scales;
  Eigen::MatrixXd loadings;     ///< p x k_max, orthonormal columns
  Eigen::VectorXd eigenvalues;  ///< descending, length k_max
  Eigen::Index k_max = 0;
};

/**
 * @brief Fits the PCA transform on raw predictor rows (no intercept column).
 * @throws std::invalid_argument for fewer than 2 rows, non-finite data, or a
 *         constant column (named in the message).
 */
[[nodiscard]] inline PcaTransform fit_pca(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (n < 2 || p < 1) throw std::invalid_argument("fit_pca requires at least 2 rows and 1 column");
  if (!X.allFinite()) throw std::invalid_argument("fit_pca: non-finite entries");

  PcaTransform t;
  t.column_means.resize(p);
  t.column_scales.resize(p);
  Eigen::MatrixXd Z(n, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double mean = X.col(j).mean();
    double ss = (X.col(j).array() - mean).square().sum();
    double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 0.0)) {
      throw std::invalid_argument("fit_pca: column " + std::to_string(j) +
                                  " is constant; correlation scaling undefined");
    }
    t.column_means[j] = mean;
    t.column_scales[j] = sd;
    Z.col(j) = (X.col(j).array() - mean) / sd;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(Z, Eigen::ComputeThinV);
  t.k_max = std::min(n - 1, p);
  t.loadings = svd.matrixV().leftCols(t.k_max);
  t.eigenvalues = svd.singularValues().head(t.k_max).array().square() /
                  static_cast<double>(n - 1);
  for (Eigen::Index c = 0; c < t.loadings.cols(); ++c) {
    Eigen::Index imax = 0;
    t.loadings.col(c).cwiseAbs().maxCoeff(&imax);
    if (t.loadings(imax, c) < 0.0) t.loadings.col(c) = -t.loadings.col(c);
  }
  return t;
}

/**
 * @brief Projects rows onto the first k components of a fitted transform.
 * @throws std::invalid_argument if k is outside [1, k_max] or the column
 *         count does not match the transform.
 */
[[nodiscard]] inline Eigen::MatrixXd pca_project(const PcaTransform& t, const Eigen::MatrixXd& X,
                                                 Eigen::Index k) {
  if (k < 1 || k > t.k_max) {
    throw std::invalid_argument("pca_project: k must lie in [1, k_max]");
  }
  if (X.cols() != t.column_means.size()) {
    throw std::invalid_argument("pca_project: column count mismatch");
  }
  Eigen::MatrixXd Z = (X.rowwise() - t.column_means.transpose()).array().rowwise() /
                      t.column_scales.transpose().array();
  return Z * t.loadings.leftCols(k);
}

}  // namespace quarts
