#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "quarts/cross_validation.hpp"
#include "quarts/diagnostics.hpp"
#include "quarts/gls.hpp"
#include "quarts/pca.hpp"
#include "quarts/quarts_fit.hpp"
#include "quarts/types.hpp"

namespace quarts {

/// Settings for the residual-autocorrelation lag search.
struct RarldConfig {
  int max_q = 5;
  double significance = 0.05;
  std::size_t ljung_box_lag = 0;  ///< 0 uses the diagnostics default
  std::size_t acf_max_lag = 0;    ///< 0 uses the diagnostics default
  QuartsConfig fit;
};

/// A selected lag order with the diagnostics trail that justified it:
/// one report per candidate order 0..q, so the vector has length q + 1.
struct LagSelection {
  int q = 0;
  std::vector<DiagnosticsReport> diagnostics;
};

/// Thrown when every candidate order up to max_q still shows serial
/// correlation; carries the full diagnostics trail for inspection.
class LagDeterminationError : public std::runtime_error {
 public:
  LagDeterminationError(const std::string& message, std::vector<DiagnosticsReport> trail)
      : std::runtime_error(message), diagnostics(std::move(trail)) {}

  std::vector<DiagnosticsReport> diagnostics;
};

namespace detail {

[[nodiscard]] inline DiagnosticsConfig diagnostics_config(const RarldConfig& cfg) {
  DiagnosticsConfig d;
  d.max_lag = cfg.acf_max_lag;
  d.ljung_box_lag = cfg.ljung_box_lag;
  d.significance = cfg.significance;
  return d;
}

[[nodiscard]] inline DiagnosticsReport innovations_report(const Eigen::VectorXd& innovations,
                                                          const DiagnosticsConfig& dcfg) {
  return compute_diagnostics(
      std::span<const double>(innovations.data(), static_cast<std::size_t>(innovations.size())),
      dcfg);
}

}  // namespace detail

/**
 * @brief Selects the AR order by increasing it until innovations look serially clean.
 *
 * Starting at q = 0, the model is fit at each candidate order and the
 * Ljung-Box test is run on its innovations; the first order whose
 * innovations show no significant serial correlation wins. The returned
 * trail holds one diagnostics report per visited order.
 *
 * @throws LagDeterminationError if serial correlation persists through max_q.
 */
[[nodiscard]] inline LagSelection rarld(const Eigen::VectorXd& y, const DesignMatrix& X,
                                        double tau, FitterKind kind, const RarldConfig& cfg = {}) {
  if (cfg.max_q < 0) throw std::invalid_argument("lag search: max_q must be nonnegative");
  DiagnosticsConfig dcfg = detail::diagnostics_config(cfg);
  LagSelection sel;
  for (int q = 0; q <= cfg.max_q; ++q) {
    DiagnosticsReport report;
    if (kind == FitterKind::quarts) {
      QuartsModel model = quarts_fit(y, X, q, tau, cfg.fit);
      report = detail::innovations_report(model.innovations, dcfg);
    } else {
      GlsModel model = gls_fit(y, X, q, cfg.fit);
      report = detail::innovations_report(model.innovations, dcfg);
    }
    sel.diagnostics.push_back(std::move(report));
    if (!sel.diagnostics.back().ar_behavior_detected) {
      sel.q = q;
      return sel;
    }
  }
  throw LagDeterminationError(
      "serial correlation persists at every order up to max_q = " + std::to_string(cfg.max_q),
      std::move(sel.diagnostics));
}

/// Lag order and component count selected jointly; the cross-validation
/// reports are aligned with the diagnostics trail (one per visited order).
struct LagAndComponents {
  int q = 0;
  int k = 0;
  std::vector<DiagnosticsReport> diagnostics;
  std::vector<CvReport> cv_per_q;
};

/**
 * @brief Lag search with the component count re-selected at every candidate order.
 *
 * The regularized design depends on the order through the fold geometry, so
 * each candidate q first runs blocked cross-validation for its own k; the
 * diagnostic fit then uses the full-sample component transform truncated to
 * that k. The transform offered to the final fit is refit by the caller.
 *
 * @throws LagDeterminationError if serial correlation persists through max_q.
 */
[[nodiscard]] inline LagAndComponents rarld_with_cv(const Eigen::VectorXd& y,
                                                    const Eigen::MatrixXd& X_raw, double tau,
                                                    FitterKind kind, const RarldConfig& cfg,
                                                    const CvConfig& cv) {
  if (cfg.max_q < 0) throw std::invalid_argument("lag search: max_q must be nonnegative");
  DiagnosticsConfig dcfg = detail::diagnostics_config(cfg);
  PcaTransform pca = fit_pca(X_raw);
  LagAndComponents sel;
  for (int q = 0; q <= cfg.max_q; ++q) {
    CvReport report = blocked_cv_select_k(y, X_raw, q, tau, kind, cv);
    DesignMatrix design = DesignMatrix::with_intercept(pca_project(pca, X_raw, report.selected_k));
    DiagnosticsReport diag;
    if (kind == FitterKind::quarts) {
      QuartsModel model = quarts_fit(y, design, q, tau, cfg.fit);
      diag = detail::innovations_report(model.innovations, dcfg);
    } else {
      GlsModel model = gls_fit(y, design, q, cfg.fit);
      diag = detail::innovations_report(model.innovations, dcfg);
    }
    sel.cv_per_q.push_back(std::move(report));
    sel.diagnostics.push_back(std::move(diag));
    if (!sel.diagnostics.back().ar_behavior_detected) {
      sel.q = q;
      sel.k = sel.cv_per_q.back().selected_k;
      return sel;
    }
  }
  throw LagDeterminationError(
      "serial correlation persists at every order up to max_q = " + std::to_string(cfg.max_q),
      std::move(sel.diagnostics));
}

}  // namespace quarts
