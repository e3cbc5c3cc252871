#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "quarts/ar.hpp"
#include "quarts/gls.hpp"
#include "quarts/innovation.hpp"
#include "quarts/parallel.hpp"
#include "quarts/pca.hpp"
#include "quarts/quarts_fit.hpp"
#include "quarts/rng.hpp"
#include "quarts/types.hpp"

namespace quarts {

/// Settings shared by the fixed-design bootstrap routines.
struct BootstrapConfig {
  int replications = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::size_t burn_in = 500;
  /// Error out if more than this fraction of refits is unusable.
  double max_failure_fraction = 0.05;
  QuartsConfig fit;
};

/// One retained bootstrap refit.
struct BootstrapReplication {
  Eigen::VectorXd beta;
  std::vector<double> phi;
  /// Whether the refit reached the parameter tolerance; a false value means
  /// the best-objective fallback iterate was kept.
  bool converged = true;
};

/// Retained refits plus everything needed to interpret them.
struct BootstrapEnsemble {
  std::vector<BootstrapReplication> replications;  ///< refits that returned, in index order
  std::vector<int> failed_indices;                 ///< replication indices whose refit threw
  Eigen::VectorXd beta_hat;                        ///< original fit the ensemble varies around
  std::vector<double> phi_hat;
  int q = 0;
  double tau = 0.5;
  FitterKind fitter = FitterKind::quarts;
  std::uint64_t seed = 0;
  int requested = 0;
};

/// Per-coefficient summary of a bootstrap ensemble.
struct CoefficientInference {
  std::vector<std::string> names;
  std::vector<double> estimate;
  std::vector<double> boot_sd;
  std::vector<double> ci_lower;
  std::vector<double> ci_upper;
  std::vector<double> p_value;
  double alpha = 0.05;
};

namespace detail {

/// Type-7 quantile of a sorted sample (linear interpolation at h=(n-1)p).
[[nodiscard]] inline double sorted_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  if (sorted.size() == 1) return sorted[0];
  double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo >= sorted.size() - 1) return sorted.back();
  double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

struct RefitOutcome {
  Eigen::VectorXd beta;
  std::vector<double> phi;
  Eigen::VectorXd residuals;
  bool ok = false;         ///< the refit produced parameters (did not throw)
  bool converged = false;  ///< the refit reached the parameter tolerance
};

/// Refits the chosen model on a simulated response over the original design.
/// A non-convergent refit still yields its best-objective iterate, which is
/// kept; only a refit that throws produces no parameters at all.
[[nodiscard]] inline RefitOutcome bootstrap_refit(const Eigen::VectorXd& y,
                                                  const Eigen::MatrixXd& X, int q, double tau,
                                                  FitterKind kind, const QuartsConfig& cfg,
                                                  const std::vector<RowRole>& roles) {
  RefitOutcome out;
  MaskedFit fit = kind == FitterKind::quarts ? quarts_fit_masked(y, X, q, tau, cfg, roles)
                                             : gls_fit_masked(y, X, q, cfg, roles);
  out.beta = fit.beta;
  out.phi = fit.phi;
  out.residuals = y - X * fit.beta;
  out.ok = true;
  out.converged = fit.converged;
  return out;
}

/// Simulates one bootstrap response: fixed design plus a fresh AR error path.
[[nodiscard]] inline Eigen::VectorXd simulate_response(const Eigen::MatrixXd& X,
                                                       const Eigen::VectorXd& beta,
                                                       std::span<const double> phi,
                                                       const InnovationDistribution& dist,
                                                       std::size_t burn_in, Rng& rng) {
  const auto n = static_cast<std::size_t>(X.rows());
  std::vector<double> draws = sample_innovations(dist, n + burn_in, rng);
  std::vector<double> eps = simulate_stationary(phi, draws, burn_in);
  Eigen::VectorXd y = X * beta;
  for (std::size_t i = 0; i < n; ++i) y[static_cast<Eigen::Index>(i)] += eps[i];
  return y;
}

inline void enforce_failure_budget(const std::vector<int>& failed, int requested,
                                   double max_fraction) {
  double frac = static_cast<double>(failed.size()) / static_cast<double>(requested);
  if (frac > max_fraction) {
    throw std::runtime_error("bootstrap: " + std::to_string(failed.size()) + " of " +
                             std::to_string(requested) +
                             " replications failed, exceeding the allowed fraction");
  }
}

[[nodiscard]] inline BootstrapEnsemble run_coefficient_bootstrap(
    const Eigen::VectorXd& beta_hat, const std::vector<double>& phi_hat, int q, double tau,
    FitterKind kind, const Eigen::MatrixXd& X, const InnovationDistribution& dist,
    const BootstrapConfig& cfg) {
  // A single replication is a legal (if uninformative) ensemble; the
  // two-replication minimum belongs to the summary step, which needs spread.
  if (cfg.replications < 1) throw std::invalid_argument("bootstrap needs at least 1 replication");
  const auto B = static_cast<std::size_t>(cfg.replications);
  std::vector<RowRole> roles(static_cast<std::size_t>(X.rows()), RowRole::active);
  std::vector<RefitOutcome> slots(B);
  parallel_for(B, cfg.threads, [&](std::size_t r) {
    Rng rng = Rng::substream(cfg.seed, r);
    try {
      Eigen::VectorXd ytilde = simulate_response(X, beta_hat, phi_hat, dist, cfg.burn_in, rng);
      slots[r] = bootstrap_refit(ytilde, X, q, tau, kind, cfg.fit, roles);
    } catch (const std::exception&) {
      slots[r].ok = false;
    }
  });

  BootstrapEnsemble ens;
  ens.beta_hat = beta_hat;
  ens.phi_hat = phi_hat;
  ens.q = q;
  ens.tau = tau;
  ens.fitter = kind;
  ens.seed = cfg.seed;
  ens.requested = cfg.replications;
  for (std::size_t r = 0; r < B; ++r) {
    if (slots[r].ok) {
      ens.replications.push_back(
          {std::move(slots[r].beta), std::move(slots[r].phi), slots[r].converged});
    } else {
      ens.failed_indices.push_back(static_cast<int>(r));
    }
  }
  enforce_failure_budget(ens.failed_indices, cfg.replications, cfg.max_failure_fraction);
  return ens;
}

/// Summarizes one coefficient column across replications.
inline void summarize_column(const std::vector<double>& column, double estimate, double alpha,
                             CoefficientInference& out) {
  const auto n = static_cast<double>(column.size());
  double mean = 0.0;
  for (double v : column) mean += v;
  mean /= n;
  double ss = 0.0;
  std::size_t le = 0;
  std::size_t ge = 0;
  for (double v : column) {
    ss += (v - mean) * (v - mean);
    if (v <= 0.0) ++le;
    if (v >= 0.0) ++ge;
  }
  std::vector<double> sorted = column;
  std::sort(sorted.begin(), sorted.end());
  out.estimate.push_back(estimate);
  out.boot_sd.push_back(std::sqrt(ss / (n - 1.0)));
  out.ci_lower.push_back(sorted_quantile(sorted, alpha / 2.0));
  out.ci_upper.push_back(sorted_quantile(sorted, 1.0 - alpha / 2.0));
  double frac_le = static_cast<double>(le) / n;
  double frac_ge = static_cast<double>(ge) / n;
  double p = std::max(2.0 * std::min(frac_le, frac_ge), 2.0 / n);
  out.p_value.push_back(std::min(p, 1.0));
}

}  // namespace detail

/**
 * @brief Fixed-design residual bootstrap of a fitted quantile model.
 *
 * Each replication draws a fresh innovation stream from the fitted law,
 * pushes it through the fitted AR recursion (after a burn-in so the error
 * path starts at stationarity), adds the fixed regression surface, and
 * refits the full model on the simulated response. A refit that stops
 * without meeting the parameter tolerance keeps its best-objective iterate
 * and is retained with converged = false; only replications whose refit
 * throws are dropped and logged, and more than `max_failure_fraction` of
 * those is an error. Replication r draws from the substream (seed, r), so
 * results do not depend on thread scheduling.
 */
[[nodiscard]] inline BootstrapEnsemble bootstrap_coefficients(const QuartsModel& model,
                                                              const InnovationDistribution& dist,
                                                              const DesignMatrix& X,
                                                              const BootstrapConfig& cfg) {
  return detail::run_coefficient_bootstrap(model.beta, model.phi.phi, model.q, model.tau,
                                           FitterKind::quarts, X.matrix(), dist, cfg);
}

/// Least-squares counterpart of the quantile bootstrap.
[[nodiscard]] inline BootstrapEnsemble bootstrap_coefficients(const GlsModel& model,
                                                              const InnovationDistribution& dist,
                                                              const DesignMatrix& X,
                                                              const BootstrapConfig& cfg) {
  return detail::run_coefficient_bootstrap(model.beta, model.phi.phi, model.q, 0.5,
                                           FitterKind::gls, X.matrix(), dist, cfg);
}

/**
 * @brief Percentile intervals, bootstrap SDs, and two-sided p-values.
 *
 * Rows cover the regression coefficients (intercept first) followed by the
 * AR coefficients. The p-value is twice the smaller tail fraction of
 * replications at or beyond zero, floored at 2 over the retained count.
 */
[[nodiscard]] inline CoefficientInference coefficient_pvalues(const BootstrapEnsemble& ens,
                                                              double alpha = 0.05) {
  if (ens.replications.size() < 2) {
    throw std::invalid_argument("coefficient summary needs at least 2 retained replications");
  }
  const auto K = ens.replications.size();
  const auto p = static_cast<std::size_t>(ens.beta_hat.size());
  const auto q = ens.phi_hat.size();
  CoefficientInference out;
  out.alpha = alpha;
  std::vector<double> column(K);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t r = 0; r < K; ++r) {
      column[r] = ens.replications[r].beta[static_cast<Eigen::Index>(j)];
    }
    out.names.push_back(j == 0 ? "intercept" : "b" + std::to_string(j));
    detail::summarize_column(column, ens.beta_hat[static_cast<Eigen::Index>(j)], alpha, out);
  }
  for (std::size_t k = 0; k < q; ++k) {
    for (std::size_t r = 0; r < K; ++r) column[r] = ens.replications[r].phi[k];
    out.names.push_back("phi" + std::to_string(k + 1));
    detail::summarize_column(column, ens.phi_hat[k], alpha, out);
  }
  return out;
}

/**
 * @brief Coefficient inference mapped back to the proxy basis.
 *
 * A model fit on k leading components with slopes c and intercept b0 is,
 * in the original predictor basis, b0 - w'mu + w'x with
 * w = diag(1/scale) V_k c. The map is linear, so it is applied exactly to
 * every replication before summarizing; significance statements then refer
 * to individual proxies rather than components.
 */
[[nodiscard]] inline CoefficientInference coefficient_pvalues_proxy(
    const BootstrapEnsemble& ens, const PcaTransform& pca,
    const std::vector<std::string>& proxy_names, double alpha = 0.05) {
  if (ens.replications.size() < 2) {
    throw std::invalid_argument("coefficient summary needs at least 2 retained replications");
  }
  const Eigen::Index k = ens.beta_hat.size() - 1;
  if (k < 1 || k > pca.k_max) {
    throw std::invalid_argument("proxy-basis summary: component count does not match transform");
  }
  const Eigen::Index p = pca.loadings.rows();
  if (static_cast<Eigen::Index>(proxy_names.size()) != p) {
    throw std::invalid_argument("proxy-basis summary: name count does not match predictors");
  }
  Eigen::MatrixXd map = pca.column_scales.cwiseInverse().asDiagonal() * pca.loadings.leftCols(k);

  auto to_proxy = [&](const Eigen::VectorXd& beta) {
    Eigen::VectorXd w = map * beta.tail(k);
    Eigen::VectorXd full(p + 1);
    full[0] = beta[0] - w.dot(pca.column_means);
    full.tail(p) = w;
    return full;
  };

  const auto K = ens.replications.size();
  Eigen::VectorXd est = to_proxy(ens.beta_hat);
  std::vector<Eigen::VectorXd> mapped(K);
  for (std::size_t r = 0; r < K; ++r) mapped[r] = to_proxy(ens.replications[r].beta);

  CoefficientInference out;
  out.alpha = alpha;
  std::vector<double> column(K);
  for (Eigen::Index j = 0; j <= p; ++j) {
    for (std::size_t r = 0; r < K; ++r) column[r] = mapped[r][j];
    out.names.push_back(j == 0 ? "intercept" : proxy_names[static_cast<std::size_t>(j - 1)]);
    detail::summarize_column(column, est[j], alpha, out);
  }
  return out;
}

/// Simulated target paths from the path bootstrap.
struct BootstrapPaths {
  Eigen::MatrixXd horizon_prediction;  ///< retained x horizon: simulated responses
  Eigen::MatrixXd horizon_quantile;    ///< retained x horizon: conditional quantile paths
  Eigen::MatrixXd insample_quantile;   ///< retained x n, filled when requested
  std::vector<int> failed_indices;     ///< replication indices whose refit threw
  int nonconverged = 0;                ///< retained refits that kept a fallback iterate
  int requested = 0;
  std::uint64_t seed = 0;
};

/// Pointwise percentile band over simulated paths.
struct PathBand {
  std::vector<double> lower;
  std::vector<double> upper;
};

namespace detail {

[[nodiscard]] inline BootstrapPaths run_path_bootstrap(
    const Eigen::VectorXd& beta_hat, const std::vector<double>& phi_hat, int q, double tau,
    FitterKind kind, const Eigen::MatrixXd& X, const Eigen::MatrixXd& X_horizon,
    const InnovationDistribution& dist, const BootstrapConfig& cfg, bool with_insample) {
  if (cfg.replications < 2) throw std::invalid_argument("bootstrap needs at least 2 replications");
  if (X_horizon.cols() != X.cols() && X_horizon.rows() > 0) {
    throw std::invalid_argument("path bootstrap: horizon design has wrong column count");
  }
  const auto B = static_cast<std::size_t>(cfg.replications);
  const Eigen::Index n = X.rows();
  const Eigen::Index m = X_horizon.rows();
  std::vector<RowRole> roles(static_cast<std::size_t>(n), RowRole::active);

  struct Slot {
    std::vector<double> pred, cq, insample;
    bool ok = false;
    bool converged = false;
  };
  std::vector<Slot> slots(B);

  parallel_for(B, cfg.threads, [&](std::size_t r) {
    Rng rng = Rng::substream(cfg.seed, r);
    Slot& slot = slots[r];
    try {
      Eigen::VectorXd ytilde = simulate_response(X, beta_hat, phi_hat, dist, cfg.burn_in, rng);
      RefitOutcome refit = bootstrap_refit(ytilde, X, q, tau, kind, cfg.fit, roles);
      slot.converged = refit.converged;
      std::vector<double> horizon_draws = sample_innovations(dist, static_cast<std::size_t>(m), rng);
      std::vector<double> state(refit.phi.size(), 0.0);
      for (std::size_t k = 0; k < refit.phi.size(); ++k) {
        state[k] = refit.residuals[n - 1 - static_cast<Eigen::Index>(k)];
      }
      slot.pred.resize(static_cast<std::size_t>(m));
      slot.cq.resize(static_cast<std::size_t>(m));
      for (Eigen::Index j = 0; j < m; ++j) {
        double carry = 0.0;
        for (std::size_t k = 0; k < refit.phi.size(); ++k) carry += refit.phi[k] * state[k];
        double delta = horizon_draws[static_cast<std::size_t>(j)];
        double eps = carry + delta;
        double base = X_horizon.row(j).dot(refit.beta);
        slot.pred[static_cast<std::size_t>(j)] = base + eps;
        slot.cq[static_cast<std::size_t>(j)] = base + carry;
        if (!state.empty()) {
          for (std::size_t k = state.size() - 1; k > 0; --k) state[k] = state[k - 1];
          state[0] = eps;
        }
      }
      if (with_insample) {
        slot.insample.resize(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
          double v = X.row(i).dot(refit.beta);
          for (std::size_t k = 0; k < refit.phi.size() && static_cast<Eigen::Index>(k) < i; ++k) {
            v += refit.phi[k] * refit.residuals[i - 1 - static_cast<Eigen::Index>(k)];
          }
          slot.insample[static_cast<std::size_t>(i)] = v;
        }
      }
      slot.ok = true;
    } catch (const std::exception&) {
      slot.ok = false;
    }
  });

  BootstrapPaths paths;
  paths.requested = cfg.replications;
  paths.seed = cfg.seed;
  std::size_t kept = 0;
  for (const Slot& s : slots) kept += s.ok ? 1 : 0;
  paths.horizon_prediction.resize(static_cast<Eigen::Index>(kept), m);
  paths.horizon_quantile.resize(static_cast<Eigen::Index>(kept), m);
  if (with_insample) paths.insample_quantile.resize(static_cast<Eigen::Index>(kept), n);
  Eigen::Index w = 0;
  for (std::size_t r = 0; r < B; ++r) {
    if (!slots[r].ok) {
      paths.failed_indices.push_back(static_cast<int>(r));
      continue;
    }
    if (!slots[r].converged) ++paths.nonconverged;
    for (Eigen::Index j = 0; j < m; ++j) {
      paths.horizon_prediction(w, j) = slots[r].pred[static_cast<std::size_t>(j)];
      paths.horizon_quantile(w, j) = slots[r].cq[static_cast<std::size_t>(j)];
    }
    if (with_insample) {
      for (Eigen::Index i = 0; i < n; ++i) {
        paths.insample_quantile(w, i) = slots[r].insample[static_cast<std::size_t>(i)];
      }
    }
    ++w;
  }
  enforce_failure_budget(paths.failed_indices, cfg.replications, cfg.max_failure_fraction);
  return paths;
}

}  // namespace detail

/**
 * @brief Simulates target paths over a horizon (and optionally in-sample).
 *
 * Each replication simulates a response over the fitted design, refits, and
 * then runs the AR recursion forward over the horizon seeded with the last
 * q residuals of the refit. Two targets are recorded per step: the
 * simulated response (regression surface plus full error) and the
 * conditional quantile (response minus the contemporaneous innovation).
 * When `with_insample` is set, each replication also records its fitted
 * conditional quantile path over the sample; the first q of those values
 * use only the lags that exist. Refit retention follows the coefficient
 * bootstrap: fallback iterates are kept and counted in `nonconverged`,
 * thrown refits are dropped against the failure budget. Draw order within
 * a replication is fixed, so the output is independent of thread count.
 */
[[nodiscard]] inline BootstrapPaths bootstrap_paths(const QuartsModel& model,
                                                    const InnovationDistribution& dist,
                                                    const DesignMatrix& X,
                                                    const Eigen::MatrixXd& X_horizon,
                                                    const BootstrapConfig& cfg,
                                                    bool with_insample = false) {
  return detail::run_path_bootstrap(model.beta, model.phi.phi, model.q, model.tau,
                                    FitterKind::quarts, X.matrix(), X_horizon, dist, cfg,
                                    with_insample);
}

/// Least-squares counterpart of the path bootstrap.
[[nodiscard]] inline BootstrapPaths bootstrap_paths(const GlsModel& model,
                                                    const InnovationDistribution& dist,
                                                    const DesignMatrix& X,
                                                    const Eigen::MatrixXd& X_horizon,
                                                    const BootstrapConfig& cfg,
                                                    bool with_insample = false) {
  return detail::run_path_bootstrap(model.beta, model.phi.phi, model.q, 0.5, FitterKind::gls,
                                    X.matrix(), X_horizon, dist, cfg, with_insample);
}

/// Pointwise percentile band across path replications at level alpha.
[[nodiscard]] inline PathBand percentile_band(const Eigen::MatrixXd& paths, double alpha) {
  if (paths.rows() < 2) throw std::invalid_argument("percentile band needs at least 2 paths");
  if (!(alpha > 0.0) || !(alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  PathBand band;
  band.lower.resize(static_cast<std::size_t>(paths.cols()));
  band.upper.resize(static_cast<std::size_t>(paths.cols()));
  std::vector<double> column(static_cast<std::size_t>(paths.rows()));
  for (Eigen::Index j = 0; j < paths.cols(); ++j) {
    for (Eigen::Index r = 0; r < paths.rows(); ++r) {
      column[static_cast<std::size_t>(r)] = paths(r, j);
    }
    std::sort(column.begin(), column.end());
    band.lower[static_cast<std::size_t>(j)] = detail::sorted_quantile(column, alpha / 2.0);
    band.upper[static_cast<std::size_t>(j)] = detail::sorted_quantile(column, 1.0 - alpha / 2.0);
  }
  return band;
}

}  // namespace quarts
