#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "quarts/gls.hpp"
#include "quarts/parallel.hpp"
#include "quarts/pca.hpp"
#include "quarts/quarts_fit.hpp"
#include "quarts/types.hpp"

namespace quarts {

enum class FitterKind : std::uint8_t { quarts, gls };

/// Settings for blocked cross-validation over the component count.
struct CvConfig {
  int folds = 10;
  /// Context rows kept on each side of a holdout block so the AR recursion
  /// re-anchors on observed residuals instead of stale ones.
  int absorb = 4;
  int k_max = 0;  ///< 0 selects min(20, p, n/10) at runtime.
  unsigned threads = 0;
  QuartsConfig fit;
};

/// One holdout block together with its context windows.
/// Holdout spans [holdout_begin, holdout_end); the pre-context spans
/// [context_begin, holdout_begin) and the restart buffer spans
/// [holdout_end, post_end). Rows outside all three windows stay active.
struct FoldLayout {
  Eigen::Index context_begin = 0;
  Eigen::Index holdout_begin = 0;
  Eigen::Index holdout_end = 0;
  Eigen::Index post_end = 0;

  [[nodiscard]] Eigen::Index holdout_size() const { return holdout_end - holdout_begin; }
  [[nodiscard]] Eigen::Index absorbed() const {
    return (holdout_begin - context_begin) + (post_end - holdout_end);
  }
};

/// Everything the selection produced, kept for inspection and testing.
struct CvReport {
  int selected_k = 0;
  std::vector<int> candidate_k;
  std::vector<std::vector<double>> fold_losses;  ///< [candidate][fold]
  std::vector<double> mean_losses;               ///< [candidate]
  std::vector<Eigen::Index> absorbed_per_fold;
  int folds = 0;
  int absorb = 0;
};

namespace detail {

/// Splits [0, n) into a head buffer of max(absorb, q) rows followed by
/// contiguous holdout blocks of near-equal size. The head buffer is never
/// held out; it doubles as the first fold's pre-context. Each block must
/// exceed q + absorb rows so holdouts dominate their context windows.
inline std::vector<FoldLayout> make_fold_layouts(Eigen::Index n, int q, const CvConfig& cfg) {
  if (cfg.folds < 2) throw std::invalid_argument("cross-validation needs at least 2 folds");
  if (cfg.absorb < 0) throw std::invalid_argument("absorb must be nonnegative");
  if (q < 0) throw std::invalid_argument("q must be nonnegative");
  const Eigen::Index head = std::max<Eigen::Index>(cfg.absorb, q);
  const Eigen::Index span = n - head;
  if (span < cfg.folds) throw std::invalid_argument("too few rows for the requested fold count");
  const Eigen::Index base = span / cfg.folds;
  const Eigen::Index extra = span % cfg.folds;
  if (base <= static_cast<Eigen::Index>(q + cfg.absorb)) {
    throw std::invalid_argument(
        "cross-validation blocks would have " + std::to_string(base) +
        " rows; need more than q + absorb = " + std::to_string(q + cfg.absorb));
  }
  std::vector<FoldLayout> folds;
  folds.reserve(static_cast<std::size_t>(cfg.folds));
  Eigen::Index cursor = head;
  for (int f = 0; f < cfg.folds; ++f) {
    FoldLayout l;
    l.holdout_begin = cursor;
    l.holdout_end = cursor + base + (f < extra ? 1 : 0);
    l.context_begin = l.holdout_begin - head;
    l.post_end = std::min<Eigen::Index>(n, l.holdout_end + cfg.absorb);
    folds.push_back(l);
    cursor = l.holdout_end;
  }
  return folds;
}

/// Expands a fold layout into per-row roles for the masked fitters.
inline std::vector<RowRole> fold_roles(Eigen::Index n, const FoldLayout& fold) {
  std::vector<RowRole> roles(static_cast<std::size_t>(n), RowRole::active);
  for (Eigen::Index i = fold.context_begin; i < fold.holdout_begin; ++i) {
    roles[static_cast<std::size_t>(i)] = RowRole::context;
  }
  for (Eigen::Index i = fold.holdout_begin; i < fold.holdout_end; ++i) {
    roles[static_cast<std::size_t>(i)] = RowRole::holdout;
  }
  for (Eigen::Index i = fold.holdout_end; i < fold.post_end; ++i) {
    roles[static_cast<std::size_t>(i)] = RowRole::context;
  }
  return roles;
}

/// Fits the component transform on the fold's active rows only, so holdout
/// rows never influence the directions they are later scored against.
inline PcaTransform fold_pca(const Eigen::MatrixXd& X, const std::vector<RowRole>& roles) {
  Eigen::Index count = 0;
  for (RowRole r : roles) {
    if (r == RowRole::active) ++count;
  }
  Eigen::MatrixXd active(count, X.cols());
  Eigen::Index w = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (roles[static_cast<std::size_t>(i)] == RowRole::active) active.row(w++) = X.row(i);
  }
  return fit_pca(active);
}

/// Mean holdout loss for one fitted fold. Residuals are taken against the
/// fitted regression surface at every row, and each holdout point is scored
/// on its innovation after removing the fitted AR carryover, so consecutive
/// holdout points propagate true residuals rather than model forecasts.
inline double fold_holdout_loss(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                const MaskedFit& fit, const FoldLayout& fold, double tau,
                                FitterKind kind) {
  const Eigen::VectorXd resid = y - X * fit.beta;
  const int q = static_cast<int>(fit.phi.size());
  double total = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = fold.holdout_begin; i < fold.holdout_end; ++i) {
    if (i < static_cast<Eigen::Index>(q)) continue;
    double innovation = resid[i];
    for (int k = 1; k <= q; ++k) innovation -= fit.phi[static_cast<std::size_t>(k - 1)] * resid[i - k];
    total += kind == FitterKind::quarts ? check_loss(innovation, tau) : innovation * innovation;
    ++count;
  }
  if (count == 0) throw std::runtime_error("cross-validation fold has no scorable holdout rows");
  return total / static_cast<double>(count);
}

/// Fits one fold at one component count and returns the holdout loss.
/// k = 0 means no projection: the raw columns enter the design directly.
inline double fold_loss_at_k(const Eigen::VectorXd& y, const Eigen::MatrixXd& X_raw,
                             const PcaTransform& pca, int k, int q, double tau, FitterKind kind,
                             const QuartsConfig& fit_cfg, const FoldLayout& fold,
                             const std::vector<RowRole>& roles) {
  Eigen::MatrixXd design(X_raw.rows(), (k > 0 ? k : X_raw.cols()) + 1);
  design.col(0).setOnes();
  if (k > 0) {
    design.rightCols(k) = pca_project(pca, X_raw, k);
  } else {
    design.rightCols(X_raw.cols()) = X_raw;
  }
  MaskedFit fit = kind == FitterKind::quarts
                      ? quarts_fit_masked(y, design, q, tau, fit_cfg, roles)
                      : gls_fit_masked(y, design, q, fit_cfg, roles);
  return fold_holdout_loss(y, design, fit, fold, tau, kind);
}

}  // namespace detail

/**
 * @brief Picks the component count by blocked cross-validation.
 *
 * The sample is split into contiguous holdout blocks after a head buffer.
 * For each fold a fresh component transform is fitted on the fold's active
 * rows, candidate counts k = 3..k_max reuse that one transform truncated,
 * and the fold's model is refitted per k with holdout and context rows
 * masked out of the regression. The winner minimizes the mean holdout loss
 * (check loss at tau for the quantile fitter, squared error for the
 * least-squares fitter); ties break toward the smaller k. The procedure is
 * deterministic: nothing here draws random numbers.
 *
 * @throws std::invalid_argument if the effective k_max is below 3 or the
 *         sample cannot support the fold geometry.
 */
[[nodiscard]] inline CvReport blocked_cv_select_k(const Eigen::VectorXd& y,
                                                  const Eigen::MatrixXd& X_raw, int q, double tau,
                                                  FitterKind kind, const CvConfig& cfg) {
  const Eigen::Index n = y.size();
  if (X_raw.rows() != n) throw std::invalid_argument("cross-validation: row count mismatch");
  int k_max = cfg.k_max;
  if (k_max == 0) {
    k_max = static_cast<int>(std::min<Eigen::Index>(std::min<Eigen::Index>(20, X_raw.cols()), n / 10));
  }
  if (k_max < 3) {
    throw std::invalid_argument("cross-validation needs k_max >= 3; got " + std::to_string(k_max));
  }
  if (k_max > X_raw.cols()) {
    throw std::invalid_argument("cross-validation: k_max exceeds the predictor count");
  }

  std::vector<FoldLayout> folds = detail::make_fold_layouts(n, q, cfg);
  CvReport report;
  report.folds = cfg.folds;
  report.absorb = cfg.absorb;
  for (int k = 3; k <= k_max; ++k) report.candidate_k.push_back(k);
  report.fold_losses.assign(report.candidate_k.size(),
                            std::vector<double>(folds.size(), 0.0));
  report.absorbed_per_fold.resize(folds.size());

  parallel_for(folds.size(), cfg.threads, [&](std::size_t f) {
    const FoldLayout& fold = folds[f];
    std::vector<RowRole> roles = detail::fold_roles(n, fold);
    PcaTransform pca = detail::fold_pca(X_raw, roles);
    if (pca.k_max < k_max) {
      throw std::runtime_error("cross-validation fold has too few active rows for k_max components");
    }
    for (std::size_t c = 0; c < report.candidate_k.size(); ++c) {
      report.fold_losses[c][f] = detail::fold_loss_at_k(
          y, X_raw, pca, report.candidate_k[c], q, tau, kind, cfg.fit, fold, roles);
    }
    report.absorbed_per_fold[f] = fold.absorbed();
  });

  report.mean_losses.resize(report.candidate_k.size());
  std::size_t best = 0;
  for (std::size_t c = 0; c < report.candidate_k.size(); ++c) {
    double sum = 0.0;
    for (double v : report.fold_losses[c]) sum += v;
    report.mean_losses[c] = sum / static_cast<double>(folds.size());
    if (report.mean_losses[c] < report.mean_losses[best]) best = c;
  }
  report.selected_k = report.candidate_k[best];
  return report;
}

}  // namespace quarts
