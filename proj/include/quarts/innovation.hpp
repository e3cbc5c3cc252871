#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "quarts/cross_validation.hpp"
#include "quarts/diagnostics.hpp"
#include "quarts/rng.hpp"
#include "quarts/special.hpp"
#include "quarts/types.hpp"

namespace quarts {

enum class InnovationKind : std::uint8_t { gaussian, empirical, asymmetric_laplace };

/// When to shift a fitted Gaussian so its tau-quantile sits at zero.
/// `when_off_median` shifts only for tau != 0.5, matching the convention
/// that innovations of a tau-quantile model have tau-quantile zero.
enum class CenterPolicy : std::uint8_t { when_off_median, always, never };

/**
 * @brief A fitted innovation law used for simulation and propagation.
 *
 * `sigma_naive` is the sample standard deviation of the innovations
 * (divisor m - 1); `sigma` is the value in effect, which differs after the
 * overfitting correction has been applied. `sample_mean` records the raw
 * sample mean before any quantile centering. The Anderson-Darling result is
 * always computed against the normal family as a reference, regardless of
 * kind.
 */
struct InnovationDistribution {
  InnovationKind kind = InnovationKind::gaussian;
  double tau = 0.5;
  double sample_mean = 0.0;
  double sigma_naive = 0.0;
  double sigma = 0.0;
  bool quantile_centered = false;

  double gaussian_mean = 0.0;       ///< mean of the sampling law (gaussian kind)
  std::vector<double> values;       ///< stored sample (empirical kind)
  double laplace_scale = 0.0;       ///< scale b (asymmetric_laplace kind)

  AndersonDarlingResult normality;

  /// Mean of the law the sampler actually draws from.
  [[nodiscard]] double mean() const {
    switch (kind) {
      case InnovationKind::gaussian:
        return gaussian_mean;
      case InnovationKind::empirical: {
        double s = std::accumulate(values.begin(), values.end(), 0.0);
        return s / static_cast<double>(values.size());
      }
      case InnovationKind::asymmetric_laplace:
        return asymmetric_laplace_mean(tau, laplace_scale);
    }
    return 0.0;
  }
};

/**
 * @brief Fits an innovation law to the innovations of a fitted model.
 *
 * Gaussian: sample mean and standard deviation; optionally shifted so the
 * tau-quantile is exactly zero (the raw mean stays in `sample_mean`).
 * Empirical: the sample is stored as-is for resampling; the quantile fit
 * already places roughly a tau fraction of innovations below zero, so no
 * shift is applied. Asymmetric Laplace: the scale is the mean check loss of
 * the sample, which pins the tau-quantile at zero by construction.
 *
 * @throws std::invalid_argument for fewer than 8 points (the normality
 *         reference needs them) or a zero-variance sample.
 */
[[nodiscard]] inline InnovationDistribution estimate_innovation_distribution(
    std::span<const double> innovations, double tau, InnovationKind kind,
    CenterPolicy centering = CenterPolicy::when_off_median) {
  QuantileLevel level(tau);
  const std::size_t m = innovations.size();
  if (m < 8) {
    throw std::invalid_argument("innovation fit needs at least 8 points; got " +
                                std::to_string(m));
  }
  double mean = 0.0;
  for (double v : innovations) mean += v;
  mean /= static_cast<double>(m);
  double ss = 0.0;
  for (double v : innovations) ss += (v - mean) * (v - mean);
  double sd = std::sqrt(ss / static_cast<double>(m - 1));
  // A constant sample can still leave sd a few ulps above zero through the
  // rounded mean, so detect degeneracy on the range, not the variance alone.
  auto [lo, hi] = std::minmax_element(innovations.begin(), innovations.end());
  if (!(sd > 0.0) || *lo == *hi) {
    throw std::invalid_argument("innovation sample has zero variance");
  }

  InnovationDistribution dist;
  dist.kind = kind;
  dist.tau = level.value();
  dist.sample_mean = mean;
  dist.sigma_naive = sd;
  dist.sigma = sd;
  dist.normality = anderson_darling_normal(innovations);

  switch (kind) {
    case InnovationKind::gaussian: {
      bool shift = centering == CenterPolicy::always ||
                   (centering == CenterPolicy::when_off_median && tau != 0.5);
      dist.quantile_centered = shift;
      dist.gaussian_mean = shift ? -sd * normal_quantile(tau) : mean;
      break;
    }
    case InnovationKind::empirical:
      dist.values.assign(innovations.begin(), innovations.end());
      break;
    case InnovationKind::asymmetric_laplace: {
      double b = 0.0;
      for (double v : innovations) b += check_loss(v, tau);
      b /= static_cast<double>(m);
      if (!(b > 0.0)) throw std::invalid_argument("asymmetric Laplace scale collapsed to zero");
      dist.laplace_scale = b;
      dist.quantile_centered = true;
      break;
    }
  }
  return dist;
}

/**
 * @brief Returns a copy of the law with its spread set to `sigma_corrected`.
 *
 * Gaussian: the standard deviation is replaced (and the quantile shift
 * recomputed if one was in effect). Empirical: stored values are rescaled
 * about the sample mean by sigma_corrected / sigma_naive. Asymmetric
 * Laplace: the scale is multiplied by the same ratio, which preserves the
 * zero tau-quantile.
 */
[[nodiscard]] inline InnovationDistribution apply_corrected_sigma(InnovationDistribution dist,
                                                                  double sigma_corrected) {
  if (!(sigma_corrected > 0.0) || !std::isfinite(sigma_corrected)) {
    throw std::invalid_argument("corrected sigma must be positive and finite");
  }
  const double ratio = sigma_corrected / dist.sigma_naive;
  switch (dist.kind) {
    case InnovationKind::gaussian:
      if (dist.quantile_centered) {
        dist.gaussian_mean = -sigma_corrected * normal_quantile(dist.tau);
      }
      break;
    case InnovationKind::empirical:
      for (double& v : dist.values) v = dist.sample_mean + (v - dist.sample_mean) * ratio;
      break;
    case InnovationKind::asymmetric_laplace:
      dist.laplace_scale *= ratio;
      break;
  }
  dist.sigma = sigma_corrected;
  return dist;
}

/// Draws `count` innovations from the fitted law.
[[nodiscard]] inline std::vector<double> sample_innovations(const InnovationDistribution& dist,
                                                            std::size_t count, Rng& rng) {
  std::vector<double> out(count);
  switch (dist.kind) {
    case InnovationKind::gaussian:
      for (double& v : out) v = dist.gaussian_mean + dist.sigma * rng.gaussian();
      break;
    case InnovationKind::empirical:
      for (double& v : out) v = dist.values[rng.pick_index(dist.values.size())];
      break;
    case InnovationKind::asymmetric_laplace:
      for (double& v : out) v = rng.asymmetric_laplace(dist.tau, dist.laplace_scale);
      break;
  }
  return out;
}

/// Result of the blocked out-of-sample spread estimate.
struct OverfitSigma {
  double sigma_corrected = 0.0;
  std::vector<double> per_block_sd;  ///< holdout innovation SD per fold
};

/**
 * @brief Out-of-sample innovation spread from the blocked fold layout.
 *
 * Reuses the cross-validation geometry with the model order and component
 * count held fixed: each fold refits on its active rows (with a fresh
 * component transform fitted on those rows when k > 0), then the standard
 * deviation of the holdout innovations is taken per fold (divisor count-1)
 * and averaged across folds. An overfitted model shows in-sample
 * innovations that are too quiet; this estimate restores an honest spread
 * for the uncertainty machinery. Pass k = 0 to use the raw columns without
 * projection.
 */
[[nodiscard]] inline OverfitSigma overfit_corrected_sigma(const Eigen::VectorXd& y,
                                                          const Eigen::MatrixXd& X_raw, int q,
                                                          int k, double tau, FitterKind kind,
                                                          const CvConfig& cfg) {
  const Eigen::Index n = y.size();
  if (X_raw.rows() != n) throw std::invalid_argument("corrected sigma: row count mismatch");
  if (k < 0) throw std::invalid_argument("corrected sigma: k must be nonnegative");
  std::vector<FoldLayout> folds = detail::make_fold_layouts(n, q, cfg);

  OverfitSigma out;
  out.per_block_sd.resize(folds.size());
  parallel_for(folds.size(), cfg.threads, [&](std::size_t f) {
    const FoldLayout& fold = folds[f];
    std::vector<RowRole> roles = detail::fold_roles(n, fold);
    Eigen::MatrixXd design(n, (k > 0 ? k : X_raw.cols()) + 1);
    design.col(0).setOnes();
    if (k > 0) {
      PcaTransform pca = detail::fold_pca(X_raw, roles);
      if (pca.k_max < k) {
        throw std::runtime_error("corrected sigma: fold has too few active rows for k components");
      }
      design.rightCols(k) = pca_project(pca, X_raw, k);
    } else {
      design.rightCols(X_raw.cols()) = X_raw;
    }
    detail::MaskedFit fit = kind == FitterKind::quarts
                                ? detail::quarts_fit_masked(y, design, q, tau, cfg.fit, roles)
                                : detail::gls_fit_masked(y, design, q, cfg.fit, roles);
    const Eigen::VectorXd resid = y - design * fit.beta;
    std::vector<double> innov;
    innov.reserve(static_cast<std::size_t>(fold.holdout_size()));
    for (Eigen::Index i = fold.holdout_begin; i < fold.holdout_end; ++i) {
      if (i < static_cast<Eigen::Index>(q)) continue;
      double d = resid[i];
      for (int kk = 1; kk <= q; ++kk) d -= fit.phi[static_cast<std::size_t>(kk - 1)] * resid[i - kk];
      innov.push_back(d);
    }
    if (innov.size() < 2) {
      throw std::runtime_error("corrected sigma: fold holdout too small to estimate a spread");
    }
    double mean = std::accumulate(innov.begin(), innov.end(), 0.0) /
                  static_cast<double>(innov.size());
    double ss = 0.0;
    for (double d : innov) ss += (d - mean) * (d - mean);
    out.per_block_sd[f] = std::sqrt(ss / static_cast<double>(innov.size() - 1));
  });

  out.sigma_corrected = std::accumulate(out.per_block_sd.begin(), out.per_block_sd.end(), 0.0) /
                        static_cast<double>(out.per_block_sd.size());
  return out;
}

}  // namespace quarts
