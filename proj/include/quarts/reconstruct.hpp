#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "quarts/ar.hpp"
#include "quarts/bootstrap.hpp"
#include "quarts/cross_validation.hpp"
#include "quarts/diagnostics.hpp"
#include "quarts/gls.hpp"
#include "quarts/innovation.hpp"
#include "quarts/panel.hpp"
#include "quarts/pca.hpp"
#include "quarts/quarts_fit.hpp"
#include "quarts/rarld.hpp"
#include "quarts/special.hpp"
#include "quarts/spline.hpp"
#include "quarts/types.hpp"
#include "quarts/version.hpp"

namespace quarts {

/// What the uncertainty band is a band for: the future response itself, or
/// the conditional quantile path with the contemporaneous innovation removed.
enum class BandTarget : std::uint8_t { prediction, conditional_quantile };

[[nodiscard]] inline std::string to_string(FitterKind v) {
  return v == FitterKind::quarts ? "quarts" : "gls";
}
[[nodiscard]] inline std::string to_string(InnovationKind v) {
  switch (v) {
    case InnovationKind::gaussian: return "gaussian";
    case InnovationKind::empirical: return "empirical";
    case InnovationKind::asymmetric_laplace: return "asymmetric_laplace";
  }
  return "gaussian";
}
[[nodiscard]] inline std::string to_string(CenterPolicy v) {
  switch (v) {
    case CenterPolicy::when_off_median: return "auto";
    case CenterPolicy::always: return "always";
    case CenterPolicy::never: return "never";
  }
  return "auto";
}
[[nodiscard]] inline std::string to_string(BandTarget v) {
  return v == BandTarget::prediction ? "prediction" : "conditional_quantile";
}

[[nodiscard]] inline FitterKind parse_fitter(const std::string& s) {
  if (s == "quarts") return FitterKind::quarts;
  if (s == "gls") return FitterKind::gls;
  throw std::invalid_argument("unknown fitter '" + s + "' (expected quarts or gls)");
}
[[nodiscard]] inline InnovationKind parse_innovation(const std::string& s) {
  if (s == "gaussian") return InnovationKind::gaussian;
  if (s == "empirical") return InnovationKind::empirical;
  if (s == "asymmetric_laplace") return InnovationKind::asymmetric_laplace;
  throw std::invalid_argument("unknown innovation kind '" + s + "'");
}
[[nodiscard]] inline CenterPolicy parse_centering(const std::string& s) {
  if (s == "auto") return CenterPolicy::when_off_median;
  if (s == "always") return CenterPolicy::always;
  if (s == "never") return CenterPolicy::never;
  throw std::invalid_argument("unknown centering policy '" + s + "'");
}
[[nodiscard]] inline BandTarget parse_band_target(const std::string& s) {
  if (s == "prediction") return BandTarget::prediction;
  if (s == "conditional_quantile") return BandTarget::conditional_quantile;
  throw std::invalid_argument("unknown band target '" + s + "'");
}

/// Full recipe for a reconstruction run. Nested configs inherit the
/// top-level fit settings and thread count; their own copies are ignored.
struct ReconstructConfig {
  double tau = 0.5;
  FitterKind fitter = FitterKind::quarts;
  int q = -1;  ///< -1 selects the order by the residual-correlation search
  int k = -1;  ///< -1 selects by cross-validation; 0 disables the projection
  InnovationKind innovation = InnovationKind::gaussian;
  CenterPolicy centering = CenterPolicy::when_off_median;
  BandTarget band_target = BandTarget::prediction;
  int bootstrap_replications = 500;
  std::size_t bootstrap_burn_in = 500;
  double max_failure_fraction = 0.05;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  double smooth_df = 0.0;  ///< 0 uses round(0.115 * series length)
  unsigned threads = 0;
  RarldConfig lag;
  CvConfig cv;
  QuartsConfig fit;
};

/// Everything a run needs to be audited or repeated, flattened for the
/// metadata sidecar.
struct RunMetadata {
  std::string tool_version = version;
  std::vector<std::string> argv_effective;  ///< canonical re-run arguments (CLI fills this)
  std::string fitter = "quarts";
  double tau = 0.5;
  int q = 0;
  int k = 0;
  bool q_auto = false;
  bool k_auto = false;
  std::string innovation = "gaussian";
  std::string centering = "auto";
  std::string band_target = "prediction";
  int bootstrap_replications = 0;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  double smooth_df = 0.0;
  bool orientation_reversed = false;
  long calibration_first = 0;
  long calibration_last = 0;
  long reconstruction_first = 0;
  long reconstruction_last = 0;
  bool has_reconstruction = false;
  double sigma_naive = 0.0;
  double sigma_corrected = 0.0;
  double innovation_mean = 0.0;
  double ad_statistic = 0.0;
  double ad_p_value = 0.0;
  double ljung_box_statistic = 0.0;
  double ljung_box_p_value = 0.0;
  bool fit_converged = true;
  int edge_rows = 0;  ///< leading in-sample rows without a full lag window
  int bootstrap_failures = 0;      ///< replications dropped because the refit threw
  int bootstrap_nonconverged = 0;  ///< retained replications that kept a fallback iterate
  std::vector<std::string> proxy_ids;
  std::vector<std::string> dropped_proxies;
  /// Nonempty when the run deviates from the data-driven defaults, e.g. a
  /// hand-picked model order; echoed to the sidecar so readers see it.
  std::string caveat;
};

/// The reconstructed series in calendar order with its bands.
struct ReconstructionResult {
  std::vector<long> time;
  std::vector<double> point;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<int> in_sample;  ///< 1 on calibration years
  std::vector<double> smoothed_point;
  std::vector<double> smoothed_lower;
  std::vector<double> smoothed_upper;
};

/// A reconstruction plus every intermediate the pipeline produced.
struct ReconstructOutput {
  ReconstructionResult series;
  QuartsModel model;    ///< valid when the quantile fitter ran
  GlsModel gls_model;   ///< valid when the least-squares fitter ran
  int q = 0;
  int k = 0;
  std::optional<PcaTransform> pca;
  std::optional<CvReport> cv;
  std::vector<DiagnosticsReport> lag_diagnostics;  ///< per visited order, when searched
  std::vector<CvReport> cv_per_q;                  ///< aligned with the trail, when joint
  DiagnosticsReport innovation_diagnostics;        ///< at the selected order
  InnovationDistribution innovation_law;           ///< corrected law used downstream
  OverfitSigma corrected;
  bool reversed = false;
  Eigen::MatrixXd design_calibration;  ///< with intercept, model order
  Eigen::MatrixXd design_horizon;      ///< with intercept, model order
  RunMetadata metadata;
};

namespace detail {

/// Fitted conditional quantile (or mean) path over the sample; the first q
/// rows use only the lags that exist.
[[nodiscard]] inline std::vector<double> fitted_target_path(const Eigen::MatrixXd& X,
                                                            const Eigen::VectorXd& beta,
                                                            std::span<const double> phi,
                                                            const Eigen::VectorXd& residuals) {
  const Eigen::Index n = X.rows();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double v = X.row(i).dot(beta);
    for (std::size_t k = 0; k < phi.size() && static_cast<Eigen::Index>(k) < i; ++k) {
      v += phi[k] * residuals[i - 1 - static_cast<Eigen::Index>(k)];
    }
    out[static_cast<std::size_t>(i)] = v;
  }
  return out;
}

struct SelectionOutcome {
  int q = 0;
  int k = 0;  ///< 0 means the raw columns are used directly
  std::vector<DiagnosticsReport> lag_diagnostics;
  std::vector<CvReport> cv_per_q;
  std::optional<CvReport> cv;
};

/// Resolves the order and component count per the config's auto flags.
[[nodiscard]] inline SelectionOutcome select_model(const Eigen::VectorXd& y,
                                                   const Eigen::MatrixXd& X_raw,
                                                   const ReconstructConfig& cfg) {
  SelectionOutcome out;
  const bool q_auto = cfg.q < 0;
  const bool k_auto = cfg.k < 0;
  RarldConfig lag = cfg.lag;
  lag.fit = cfg.fit;
  CvConfig cv = cfg.cv;
  cv.fit = cfg.fit;
  cv.threads = cfg.threads;

  if (q_auto && k_auto) {
    LagAndComponents joint = rarld_with_cv(y, X_raw, cfg.tau, cfg.fitter, lag, cv);
    out.q = joint.q;
    out.k = joint.k;
    out.lag_diagnostics = std::move(joint.diagnostics);
    out.cv_per_q = std::move(joint.cv_per_q);
    out.cv = out.cv_per_q.back();
    return out;
  }
  if (q_auto) {
    Eigen::MatrixXd predictors = X_raw;
    if (cfg.k > 0) predictors = pca_project(fit_pca(X_raw), X_raw, cfg.k);
    LagSelection sel = rarld(y, DesignMatrix::with_intercept(predictors), cfg.tau, cfg.fitter, lag);
    out.q = sel.q;
    out.k = cfg.k;
    out.lag_diagnostics = std::move(sel.diagnostics);
    return out;
  }
  out.q = cfg.q;
  if (k_auto) {
    CvReport report = blocked_cv_select_k(y, X_raw, cfg.q, cfg.tau, cfg.fitter, cv);
    out.k = report.selected_k;
    out.cv = std::move(report);
  } else {
    out.k = cfg.k;
  }
  return out;
}

}  // namespace detail

/**
 * @brief Runs the full reconstruction pipeline on a panel.
 *
 * Rows are rotated into model order (calibration first; when the
 * reconstruction span precedes the calibration span in the calendar, model
 * time runs against the calendar and outputs are rotated back at the end).
 * The order and component count are selected as configured, the model is
 * fit on the calibration span, the innovation law is estimated and rescaled
 * to the blocked out-of-sample spread, point estimates come from the fitted
 * conditional-quantile path in sample and the mean recursion beyond it, and
 * bands come from the normal approximation in sample (prediction target) or
 * the path bootstrap (horizon, and in-sample under the conditional-quantile
 * target). Finally all three series are smoothed to the configured
 * effective df.
 */
[[nodiscard]] inline ReconstructOutput reconstruct(const ProxyPanel& panel,
                                                   const ReconstructConfig& cfg) {
  panel.validate();
  QuantileLevel level(cfg.tau);
  if (!(cfg.alpha > 0.0) || !(cfg.alpha < 1.0)) {
    throw std::invalid_argument("alpha must lie in (0, 1)");
  }

  const auto n = static_cast<Eigen::Index>(panel.calibration.length());
  const auto m = static_cast<Eigen::Index>(panel.has_reconstruction ? panel.reconstruction.length() : 0);
  const Eigen::Index N = n + m;
  const Eigen::Index p = panel.proxies.cols();
  const bool reversed =
      panel.has_reconstruction && panel.reconstruction.last < panel.calibration.first;

  // Model order: calibration rows first, then the reconstruction horizon.
  auto panel_row = [&](Eigen::Index model_index) {
    return reversed ? N - 1 - model_index : model_index;
  };
  Eigen::VectorXd y(n);
  Eigen::MatrixXd X_cal(n, p);
  Eigen::MatrixXd X_rec(m, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index r = panel_row(i);
    y[i] = panel.instrumental[static_cast<std::size_t>(r)];
    X_cal.row(i) = panel.proxies.row(r);
  }
  for (Eigen::Index j = 0; j < m; ++j) X_rec.row(j) = panel.proxies.row(panel_row(n + j));

  ReconstructOutput out;
  out.reversed = reversed;

  detail::SelectionOutcome sel = detail::select_model(y, X_cal, cfg);
  out.q = sel.q;
  out.k = sel.k;
  out.lag_diagnostics = std::move(sel.lag_diagnostics);
  out.cv_per_q = std::move(sel.cv_per_q);
  out.cv = std::move(sel.cv);

  // Final design: a transform fitted on the calibration predictors serves
  // both spans, mirroring how folds treat their active rows.
  if (out.k > 0) {
    out.pca = fit_pca(X_cal);
    out.design_calibration =
        DesignMatrix::with_intercept(pca_project(*out.pca, X_cal, out.k)).matrix();
    out.design_horizon =
        m > 0 ? DesignMatrix::with_intercept(pca_project(*out.pca, X_rec, out.k)).matrix()
              : Eigen::MatrixXd(0, out.k + 1);
  } else {
    out.design_calibration = DesignMatrix::with_intercept(X_cal).matrix();
    out.design_horizon = m > 0 ? DesignMatrix::with_intercept(X_rec).matrix()
                               : Eigen::MatrixXd(0, p + 1);
  }
  DesignMatrix design_cal(out.design_calibration);

  Eigen::VectorXd beta;
  std::vector<double> phi;
  Eigen::VectorXd residuals;
  Eigen::VectorXd innovations;
  bool converged = true;
  QuartsConfig fit_cfg = cfg.fit;
  if (cfg.fitter == FitterKind::quarts) {
    out.model = quarts_fit(y, design_cal, out.q, cfg.tau, fit_cfg);
    beta = out.model.beta;
    phi = out.model.phi.phi;
    residuals = out.model.residuals;
    innovations = out.model.innovations;
    converged = out.model.converged;
  } else {
    out.gls_model = gls_fit(y, design_cal, out.q, fit_cfg);
    beta = out.gls_model.beta;
    phi = out.gls_model.phi.phi;
    residuals = out.gls_model.residuals;
    innovations = out.gls_model.innovations;
    converged = out.gls_model.converged;
  }

  out.innovation_diagnostics = detail::innovations_report(
      innovations, detail::diagnostics_config([&] {
        RarldConfig lag = cfg.lag;
        lag.fit = cfg.fit;
        return lag;
      }()));

  // Innovation law, rescaled to the blocked out-of-sample spread.
  std::span<const double> innov_span(innovations.data(),
                                     static_cast<std::size_t>(innovations.size()));
  InnovationDistribution naive =
      estimate_innovation_distribution(innov_span, cfg.tau, cfg.innovation, cfg.centering);
  CvConfig sigma_cfg = cfg.cv;
  sigma_cfg.fit = cfg.fit;
  sigma_cfg.threads = cfg.threads;
  out.corrected = overfit_corrected_sigma(y, X_cal, out.q, out.k, cfg.tau, cfg.fitter, sigma_cfg);
  out.innovation_law = apply_corrected_sigma(naive, out.corrected.sigma_corrected);

  // Point estimates in model order.
  std::vector<double> point = detail::fitted_target_path(out.design_calibration, beta, phi,
                                                         residuals);
  point.resize(static_cast<std::size_t>(N));
  if (m > 0) {
    std::vector<double> history(residuals.data(), residuals.data() + n);
    std::vector<double> eps_path =
        propagate_mean(phi, history, out.innovation_law.mean(), static_cast<std::size_t>(m));
    for (Eigen::Index j = 0; j < m; ++j) {
      point[static_cast<std::size_t>(n + j)] =
          out.design_horizon.row(j).dot(beta) + eps_path[static_cast<std::size_t>(j)];
    }
  }

  // Bands in model order.
  std::vector<double> lower(static_cast<std::size_t>(N));
  std::vector<double> upper(static_cast<std::size_t>(N));
  const bool need_insample_paths = cfg.band_target == BandTarget::conditional_quantile;
  const bool need_bootstrap = m > 0 || need_insample_paths;
  BootstrapPaths paths;
  if (need_bootstrap) {
    BootstrapConfig bcfg;
    bcfg.replications = cfg.bootstrap_replications;
    bcfg.alpha = cfg.alpha;
    bcfg.seed = cfg.seed;
    bcfg.threads = cfg.threads;
    bcfg.burn_in = cfg.bootstrap_burn_in;
    bcfg.max_failure_fraction = cfg.max_failure_fraction;
    bcfg.fit = cfg.fit;
    paths = detail::run_path_bootstrap(beta, phi, out.q, cfg.tau, cfg.fitter,
                                       out.design_calibration, out.design_horizon,
                                       out.innovation_law, bcfg, need_insample_paths);
  }
  if (need_insample_paths) {
    PathBand band = percentile_band(paths.insample_quantile, cfg.alpha);
    for (Eigen::Index i = 0; i < n; ++i) {
      lower[static_cast<std::size_t>(i)] = band.lower[static_cast<std::size_t>(i)];
      upper[static_cast<std::size_t>(i)] = band.upper[static_cast<std::size_t>(i)];
    }
  } else {
    const double z = normal_quantile(1.0 - cfg.alpha / 2.0);
    const double width = z * out.corrected.sigma_corrected;
    for (Eigen::Index i = 0; i < n; ++i) {
      lower[static_cast<std::size_t>(i)] = point[static_cast<std::size_t>(i)] - width;
      upper[static_cast<std::size_t>(i)] = point[static_cast<std::size_t>(i)] + width;
    }
  }
  if (m > 0) {
    const Eigen::MatrixXd& target = cfg.band_target == BandTarget::prediction
                                        ? paths.horizon_prediction
                                        : paths.horizon_quantile;
    PathBand band = percentile_band(target, cfg.alpha);
    for (Eigen::Index j = 0; j < m; ++j) {
      lower[static_cast<std::size_t>(n + j)] = band.lower[static_cast<std::size_t>(j)];
      upper[static_cast<std::size_t>(n + j)] = band.upper[static_cast<std::size_t>(j)];
    }
  }

  // Calendar order.
  ReconstructionResult& series = out.series;
  series.time = panel.years;
  series.point.resize(static_cast<std::size_t>(N));
  series.lower.resize(static_cast<std::size_t>(N));
  series.upper.resize(static_cast<std::size_t>(N));
  series.in_sample.resize(static_cast<std::size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i) {
    auto r = static_cast<std::size_t>(panel_row(i));
    series.point[r] = point[static_cast<std::size_t>(i)];
    series.lower[r] = lower[static_cast<std::size_t>(i)];
    series.upper[r] = upper[static_cast<std::size_t>(i)];
    series.in_sample[r] = i < n ? 1 : 0;
  }

  // Smoothing over the full calendar span.
  double df = cfg.smooth_df > 0.0 ? cfg.smooth_df
                                  : std::round(0.115 * static_cast<double>(N));
  df = std::min(std::max(df, 2.0), static_cast<double>(N));
  if (N >= 4) {
    series.smoothed_point = smooth_to_df(series.point, df).fitted;
    series.smoothed_lower = smooth_to_df(series.lower, df).fitted;
    series.smoothed_upper = smooth_to_df(series.upper, df).fitted;
  } else {
    series.smoothed_point = series.point;
    series.smoothed_lower = series.lower;
    series.smoothed_upper = series.upper;
  }

  // Metadata.
  RunMetadata& meta = out.metadata;
  meta.fitter = to_string(cfg.fitter);
  meta.tau = cfg.tau;
  meta.q = out.q;
  meta.k = out.k;
  meta.q_auto = cfg.q < 0;
  meta.k_auto = cfg.k < 0;
  if (!meta.q_auto || !meta.k_auto) {
    meta.caveat = "model order fixed by hand (";
    if (!meta.q_auto) meta.caveat += "q=" + std::to_string(out.q);
    if (!meta.q_auto && !meta.k_auto) meta.caveat += ", ";
    if (!meta.k_auto) meta.caveat += "k=" + std::to_string(out.k);
    meta.caveat += "), not selected from the data";
  }
  meta.innovation = to_string(cfg.innovation);
  meta.centering = to_string(cfg.centering);
  meta.band_target = to_string(cfg.band_target);
  meta.bootstrap_replications = need_bootstrap ? cfg.bootstrap_replications : 0;
  meta.alpha = cfg.alpha;
  meta.seed = cfg.seed;
  meta.smooth_df = df;
  meta.orientation_reversed = reversed;
  meta.calibration_first = panel.calibration.first;
  meta.calibration_last = panel.calibration.last;
  meta.has_reconstruction = panel.has_reconstruction;
  if (panel.has_reconstruction) {
    meta.reconstruction_first = panel.reconstruction.first;
    meta.reconstruction_last = panel.reconstruction.last;
  }
  meta.sigma_naive = out.innovation_law.sigma_naive;
  meta.sigma_corrected = out.innovation_law.sigma;
  meta.innovation_mean = out.innovation_law.mean();
  meta.ad_statistic = out.innovation_law.normality.statistic;
  meta.ad_p_value = out.innovation_law.normality.p_value;
  meta.ljung_box_statistic = out.innovation_diagnostics.ljung_box.statistic;
  meta.ljung_box_p_value = out.innovation_diagnostics.ljung_box.p_value;
  meta.fit_converged = converged;
  meta.edge_rows = static_cast<int>(std::min<Eigen::Index>(out.q, n));
  meta.bootstrap_failures = static_cast<int>(paths.failed_indices.size());
  meta.bootstrap_nonconverged = paths.nonconverged;
  meta.proxy_ids = panel.proxy_ids;
  return out;
}

/// One member of a quantile family.
struct QuantileFamilyEntry {
  double tau = 0.5;
  ReconstructOutput output;
};

/// A family of reconstructions across quantile levels, with a crossing audit.
struct QuantileFamily {
  std::vector<QuantileFamilyEntry> fits;  ///< ascending tau, successful runs only
  std::vector<std::pair<double, std::string>> failures;
  std::vector<int> crossing_steps;  ///< indices into the common time axis
  double crossing_fraction = 0.0;
};

/**
 * @brief Fits the pipeline independently at each quantile level.
 *
 * Levels run in ascending order; failures are recorded and skipped rather
 * than aborting the family. Afterwards every time step is audited for
 * quantile crossings: a step is flagged when any adjacent pair of level
 * curves is out of order. Independent fits do not guarantee monotonicity,
 * so the audit is reported rather than enforced.
 */
[[nodiscard]] inline QuantileFamily fit_quantile_family(const ProxyPanel& panel,
                                                        std::vector<double> taus,
                                                        const ReconstructConfig& cfg) {
  if (taus.empty()) throw std::invalid_argument("quantile family needs at least one level");
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  for (double t : taus) QuantileLevel check(t);

  QuantileFamily family;
  for (double t : taus) {
    ReconstructConfig level_cfg = cfg;
    level_cfg.tau = t;
    try {
      family.fits.push_back({t, reconstruct(panel, level_cfg)});
    } catch (const std::exception& err) {
      family.failures.emplace_back(t, err.what());
    }
  }
  if (family.fits.empty()) {
    std::string msg = "every quantile level failed:";
    for (const auto& f : family.failures) {
      msg += " tau=" + std::to_string(f.first) + " (" + f.second + ")";
    }
    throw std::runtime_error(msg);
  }

  if (family.fits.size() >= 2) {
    const auto steps = family.fits.front().output.series.point.size();
    for (std::size_t i = 0; i < steps; ++i) {
      bool crossed = false;
      for (std::size_t j = 0; j + 1 < family.fits.size(); ++j) {
        if (family.fits[j + 1].output.series.point[i] < family.fits[j].output.series.point[i]) {
          crossed = true;
          break;
        }
      }
      if (crossed) family.crossing_steps.push_back(static_cast<int>(i));
    }
    family.crossing_fraction =
        static_cast<double>(family.crossing_steps.size()) / static_cast<double>(steps);
  }
  return family;
}

}  // namespace quarts
