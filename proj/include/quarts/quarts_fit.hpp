#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "quarts/ar.hpp"
#include "quarts/qr_solver.hpp"
#include "quarts/rng.hpp"
#include "quarts/types.hpp"

namespace quarts {

struct QuartsConfig {
  int max_iterations = 100;
  double param_tol = 1e-6;   ///< max-norm convergence threshold on (beta, phi)
  double cycle_tol = 1e-8;   ///< two-cycle oscillation detection threshold
};

/// Role of a row in a masked fit. Context rows contribute residual lag values
/// but are excluded from the regressions; holdout rows are invisible to the fit.
enum class RowRole : std::uint8_t { active, context, holdout };

namespace detail {

/// How the alternating loop ended. Both cycle exits return a usable
/// best-objective iterate; only iteration_cap means the trajectory never
/// settled into any recognizable pattern.
enum class AlternationExit : std::uint8_t { converged, two_cycle, cycle, iteration_cap };

struct AlternationOutcome {
  Eigen::VectorXd params;
  bool converged = false;
  AlternationExit exit = AlternationExit::iteration_cap;
  int iterations = 0;
  double objective = std::numeric_limits<double>::infinity();
  std::vector<double> trace;
};

/**
 * @brief Runs the alternating-fit loop with convergence, two-cycle detection,
 *        and best-objective fallback shared by the quantile and squared-error fitters.
 *
 * `step` maps previous parameters to (new parameters, objective value).
 */
template <typename Step>
AlternationOutcome alternate(Eigen::VectorXd initial, Step&& step, const QuartsConfig& cfg) {
  AlternationOutcome out;
  std::vector<Eigen::VectorXd> iterates;
  std::vector<double> objectives;
  Eigen::VectorXd prev = std::move(initial);
  for (int j = 1; j <= cfg.max_iterations; ++j) {
    auto [next, objective] = step(prev);
    out.iterations = j;
    out.trace.push_back(objective);
    iterates.push_back(next);
    objectives.push_back(objective);
    double delta = (next - prev).cwiseAbs().maxCoeff();
    if (delta < cfg.param_tol) {
      out.params = next;
      out.objective = objective;
      out.converged = true;
      out.exit = AlternationExit::converged;
      return out;
    }
    if (j >= 3) {
      double cycle = (next - iterates[static_cast<std::size_t>(j - 3)]).cwiseAbs().maxCoeff();
      if (cycle < cfg.cycle_tol) {
        std::size_t a = static_cast<std::size_t>(j - 1);
        std::size_t b = static_cast<std::size_t>(j - 2);
        std::size_t pick = objectives[b] < objectives[a] ? b : a;
        out.params = iterates[pick];
        out.objective = objectives[pick];
        out.converged = false;
        out.exit = AlternationExit::two_cycle;
        return out;
      }
    }
    // A revisit at any longer period means the deterministic steps will
    // repeat forever; exit with the same selection the iteration cap uses.
    bool revisited = false;
    for (int period = 3; period < j && !revisited; ++period) {
      revisited = (next - iterates[static_cast<std::size_t>(j - 1 - period)]).cwiseAbs().maxCoeff() <
                  cfg.cycle_tol;
    }
    if (revisited) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < objectives.size(); ++i) {
        if (objectives[i] < objectives[best]) best = i;
      }
      out.params = iterates[best];
      out.objective = objectives[best];
      out.converged = false;
      out.exit = AlternationExit::cycle;
      return out;
    }
    prev = next;
  }
  std::size_t best = 0;
  for (std::size_t j = 1; j < objectives.size(); ++j) {
    if (objectives[j] < objectives[best]) best = j;
  }
  out.params = iterates[best];
  out.objective = objectives[best];
  out.converged = false;
  out.exit = AlternationExit::iteration_cap;
  return out;
}

/// Regression-eligible rows: active role, all q lags inside the sample and none in the holdout.
inline std::vector<Eigen::Index> regression_rows(const std::vector<RowRole>& roles, int q) {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = static_cast<std::size_t>(q); i < roles.size(); ++i) {
    if (roles[i] != RowRole::active) continue;
    bool ok = true;
    for (int k = 1; k <= q; ++k) {
      if (roles[i - static_cast<std::size_t>(k)] == RowRole::holdout) {
        ok = false;
        break;
      }
    }
    if (ok) rows.push_back(static_cast<Eigen::Index>(i));
  }
  return rows;
}

struct MaskedFit {
  Eigen::VectorXd beta;
  std::vector<double> phi;
  bool converged = false;
  AlternationExit exit = AlternationExit::iteration_cap;
  int iterations = 0;
  double objective = 0.0;
  std::vector<double> trace;
};

/**
 * @brief Alternating quantile fit on masked rows.
 *
 * Step 1 regresses the AR-corrected response on the raw design rows; step 2
 * recomputes residuals; step 3 fits an intercept-free quantile autoregression
 * of the residuals on their own lags. Residuals are maintained at every
 * non-holdout row so context rows can supply lag values.
 */
inline MaskedFit quarts_fit_masked(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, int q,
                                   double tau, const QuartsConfig& cfg,
                                   const std::vector<RowRole>& roles) {
  const Eigen::Index n = y.size();
  const Eigen::Index m = X.cols();
  if (X.rows() != n || roles.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("quarts fit: dimension mismatch");
  }
  if (q < 0) throw std::invalid_argument("quarts fit: q must be nonnegative");
  std::vector<Eigen::Index> rows = regression_rows(roles, q);
  auto nr = static_cast<Eigen::Index>(rows.size());
  if (nr <= m + q) {
    throw std::invalid_argument("quarts fit: too few usable rows for the requested order");
  }
  Eigen::MatrixXd Xr(nr, m);
  for (Eigen::Index r = 0; r < nr; ++r) Xr.row(r) = X.row(rows[static_cast<std::size_t>(r)]);

  MaskedFit out;
  if (q == 0) {
    Eigen::VectorXd yr(nr);
    for (Eigen::Index r = 0; r < nr; ++r) yr[r] = y[rows[static_cast<std::size_t>(r)]];
    QrFit fit = detail::solve_qr(yr, Xr, tau, "quarts_fit");
    out.beta = fit.beta;
    out.converged = true;
    out.exit = AlternationExit::converged;
    out.iterations = 1;
    out.objective = fit.objective;
    out.trace = {fit.objective};
    return out;
  }

  Eigen::VectorXd eps = Eigen::VectorXd::Zero(n);
  const double y_span = y.cwiseAbs().maxCoeff();

  auto step = [&](const Eigen::VectorXd& prev) {
    Eigen::VectorXd phi_prev = prev.tail(q);
    Eigen::VectorXd yr(nr);
    for (Eigen::Index r = 0; r < nr; ++r) {
      Eigen::Index i = rows[static_cast<std::size_t>(r)];
      double v = y[i];
      for (int k = 1; k <= q; ++k) v -= phi_prev[k - 1] * eps[i - k];
      yr[r] = v;
    }
    QrFit beta_fit = detail::solve_qr(yr, Xr, tau, "quarts_fit");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (roles[static_cast<std::size_t>(i)] != RowRole::holdout) {
        eps[i] = y[i] - X.row(i).dot(beta_fit.beta);
      }
    }
    Eigen::VectorXd phi_new = Eigen::VectorXd::Zero(q);
    if (eps.cwiseAbs().maxCoeff() > 1e-12 * (1.0 + y_span)) {
      Eigen::MatrixXd lags(nr, q);
      Eigen::VectorXd lhs(nr);
      for (Eigen::Index r = 0; r < nr; ++r) {
        Eigen::Index i = rows[static_cast<std::size_t>(r)];
        lhs[r] = eps[i];
        for (int k = 1; k <= q; ++k) lags(r, k - 1) = eps[i - k];
      }
      QrFit phi_fit = detail::solve_qr(lhs, lags, tau, "quarts_fit (autoregression)");
      phi_new = phi_fit.beta;
    }
    double objective = 0.0;
    for (Eigen::Index r = 0; r < nr; ++r) {
      Eigen::Index i = rows[static_cast<std::size_t>(r)];
      double d = eps[i];
      for (int k = 1; k <= q; ++k) d -= phi_new[k - 1] * eps[i - k];
      objective += check_loss(d, tau);
    }
    Eigen::VectorXd next(m + q);
    next.head(m) = beta_fit.beta;
    next.tail(q) = phi_new;
    return std::make_pair(next, objective);
  };

  AlternationOutcome alt = alternate(Eigen::VectorXd::Zero(m + q), step, cfg);
  out.beta = alt.params.head(m);
  out.phi.assign(alt.params.data() + m, alt.params.data() + m + q);
  out.converged = alt.converged;
  out.exit = alt.exit;
  out.iterations = alt.iterations;
  out.objective = alt.objective;
  out.trace = std::move(alt.trace);
  return out;
}

}  // namespace detail

/**
 * @brief Joint regression and residual-autoregression fit under the check loss.
 */
struct QuartsModel {
  Eigen::VectorXd beta;
  ArCoefficients phi;
  double tau = 0.5;
  int q = 0;
  Eigen::VectorXd residuals;    ///< y - X beta, full length n
  Eigen::VectorXd innovations;  ///< AR-filtered residuals, length n - q
  std::vector<double> objective_trace;
  double objective = 0.0;
  bool converged = false;
  detail::AlternationExit exit = detail::AlternationExit::iteration_cap;
  int iterations = 0;
};

/**
 * @brief Objective value of the joint fit: the check-loss sum of the
 *        AR-filtered regression residuals over rows q..n-1.
 *
 * Written as an independent double loop over the filtered response and
 * filtered design so it can certify the fitter's internal evaluations.
 */
[[nodiscard]] inline double quarts_objective(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                             const Eigen::VectorXd& beta,
                                             std::span<const double> phi, double tau) {
  QuantileLevel check_tau(tau);
  const Eigen::Index n = y.size();
  const auto q = static_cast<Eigen::Index>(phi.size());
  if (X.rows() != n || X.cols() != beta.size()) {
    throw std::invalid_argument("quarts_objective: dimension mismatch");
  }
  if (n <= q) throw std::invalid_argument("quarts_objective: series shorter than AR order");
  double total = 0.0;
  for (Eigen::Index i = q; i < n; ++i) {
    double fy = y[i];
    for (Eigen::Index k = 0; k < q; ++k) fy -= phi[static_cast<std::size_t>(k)] * y[i - k - 1];
    double fx = 0.0;
    for (Eigen::Index l = 0; l < X.cols(); ++l) {
      double col = X(i, l);
      for (Eigen::Index k = 0; k < q; ++k) {
        col -= phi[static_cast<std::size_t>(k)] * X(i - k - 1, l);
      }
      fx += col * beta[l];
    }
    total += check_loss(fy - fx, tau);
  }
  return total;
}

/**
 * @brief Fits the quantile regression model with autoregressive residuals by
 *        alternating a regression step and a residual-autoregression step.
 *
 * Starts from zero AR coefficients and zero residuals; stops when the
 * max-norm change of all parameters falls below config.param_tol, a revisited
 * iterate (a cycle) is detected, or the iteration cap is reached. On
 * non-convergence the best iterate by objective value is returned with
 * converged = false and the exit field records how the loop ended.
 * @throws std::invalid_argument for invalid dimensions, q < 0, or a
 *         rank-deficient design on the usable rows.
 */
[[nodiscard]] inline QuartsModel quarts_fit(const Eigen::VectorXd& y, const DesignMatrix& X, int q,
                                            double tau, const QuartsConfig& config = {}) {
  const Eigen::Index n = y.size();
  if (n <= X.cols() + q) {
    throw std::invalid_argument("quarts_fit: need n greater than q plus the column count");
  }
  std::vector<RowRole> roles(static_cast<std::size_t>(n), RowRole::active);
  detail::MaskedFit fit = detail::quarts_fit_masked(y, X.matrix(), q, tau, config, roles);

  QuartsModel model;
  model.beta = fit.beta;
  model.phi = ArCoefficients(fit.phi, tau);
  model.tau = tau;
  model.q = q;
  model.residuals = y - X.matrix() * fit.beta;
  std::vector<double> res(model.residuals.data(), model.residuals.data() + n);
  std::vector<double> innov = quasi_difference(res, fit.phi);
  model.innovations = Eigen::Map<Eigen::VectorXd>(innov.data(), static_cast<Eigen::Index>(innov.size()));
  model.objective_trace = std::move(fit.trace);
  model.objective = fit.objective;
  model.converged = fit.converged;
  model.exit = fit.exit;
  model.iterations = fit.iterations;
  return model;
}

/**
 * @brief Certified midpoint-convexity violation of the joint objective.
 *
 * Holds two parameter points and their midpoint with objective values
 * satisfying f(mid) > (f(a) + f(b)) / 2 + margin.
 */
struct NonconvexityWitness {
  Eigen::VectorXd beta_a, beta_b;
  std::vector<double> phi_a, phi_b;
  double f_a = 0.0, f_b = 0.0, f_mid = 0.0;
  double margin = 0.0;
  int attempts = 0;
};

struct WitnessConfig {
  int max_attempts = 100000;
  double required_margin = 1e-6;
  std::uint64_t seed = 20240913;
};

namespace detail {

/// Exhaustive or sampled verification that some non-intercept column keeps
/// sign-pattern weighted sums away from zero (the nonconvexity precondition).
inline bool regularity_condition_holds(const Eigen::MatrixXd& X, int q, double tau,
                                       Eigen::Index* witness_column = nullptr) {
  const Eigen::Index n = X.rows();
  const Eigen::Index rows = n - q;
  for (Eigen::Index j = 1; j < X.cols(); ++j) {
    Eigen::VectorXd col(rows);
    for (Eigen::Index i = 0; i < rows; ++i) col[i] = X(i + q, j);
    double scale = col.cwiseAbs().sum() + 1e-12;
    bool ok = true;
    if (std::abs(tau - 0.5) < 1e-15) {
      ok = std::abs(col.sum()) > 1e-9 * scale;
    } else if (rows <= 22) {
      // Gray-code walk over all sign patterns, one coefficient flip per step.
      double sum = (1.0 - tau) * col.sum();
      std::vector<int> bits(static_cast<std::size_t>(rows), 0);
      std::uint64_t total = 1ull << rows;
      if (std::abs(sum) <= 1e-9 * scale) ok = false;
      for (std::uint64_t g = 1; g < total && ok; ++g) {
        int flip = std::countr_zero(g);
        double delta = (2.0 * tau - 1.0) * col[flip];
        if (bits[static_cast<std::size_t>(flip)] == 0) {
          sum += delta;
          bits[static_cast<std::size_t>(flip)] = 1;
        } else {
          sum -= delta;
          bits[static_cast<std::size_t>(flip)] = 0;
        }
        if (std::abs(sum) <= 1e-9 * scale) ok = false;
      }
    } else {
      Rng rng(0x5eedu);
      for (int trial = 0; trial < 20000 && ok; ++trial) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < rows; ++i) {
          sum += (rng.uniform() < 0.5 ? tau : 1.0 - tau) * col[i];
        }
        if (std::abs(sum) <= 1e-9 * scale) ok = false;
      }
    }
    if (ok) {
      if (witness_column != nullptr) *witness_column = j;
      return true;
    }
  }
  return false;
}

}  // namespace detail

/**
 * @brief Searches for a certified midpoint-convexity violation of the joint
 *        objective in (phi, beta) space.
 *
 * Exploits the bilinear coupling between the first AR coefficient and one
 * regression coefficient: along the direction that pairs them with opposite
 * sign to the local curvature term, the objective restricted to a short
 * segment is concave, so the midpoint lies above the chord. Every candidate
 * is re-verified through the public objective evaluator before acceptance.
 * @throws std::invalid_argument if q < 1 or the regularity precondition fails;
 * @throws std::runtime_error if no certified violation is found within the
 *         attempt budget.
 */
[[nodiscard]] inline NonconvexityWitness find_nonconvexity_witness(const Eigen::VectorXd& y,
                                                                   const DesignMatrix& X, int q,
                                                                   double tau,
                                                                   const WitnessConfig& config = {}) {
  QuantileLevel check_tau(tau);
  if (q < 1) throw std::invalid_argument("nonconvexity witness requires q >= 1");
  const Eigen::Index n = y.size();
  const Eigen::MatrixXd& Xm = X.matrix();
  if (n <= q + Xm.cols()) throw std::invalid_argument("nonconvexity witness: series too short");
  Eigen::Index j = 0;
  if (!detail::regularity_condition_holds(Xm, q, tau, &j)) {
    throw std::invalid_argument("nonconvexity witness: regularity precondition not satisfied");
  }

  Eigen::VectorXd beta_ls = Xm.colPivHouseholderQr().solve(y);
  double beta_scale = 1.0 + beta_ls.cwiseAbs().maxCoeff();
  Rng rng(config.seed);

  auto objective = [&](const Eigen::VectorXd& beta, const std::vector<double>& phi) {
    return quarts_objective(y, Xm, beta, phi, tau);
  };

  NonconvexityWitness w;
  for (int attempt = 1; attempt <= config.max_attempts; ++attempt) {
    w.attempts = attempt;
    std::vector<double> phi(static_cast<std::size_t>(q));
    for (double& v : phi) v = -0.8 + 1.6 * rng.uniform();
    Eigen::VectorXd beta = beta_ls;
    for (Eigen::Index l = 0; l < beta.size(); ++l) beta[l] += 0.5 * beta_scale * rng.gaussian();

    // Curvature of the (phi_1, beta_j) block at the base point.
    double s = 0.0;
    for (Eigen::Index i = q; i < n; ++i) {
      double fy = y[i];
      for (int k = 0; k < q; ++k) fy -= phi[static_cast<std::size_t>(k)] * y[i - k - 1];
      double fx = 0.0;
      for (Eigen::Index l = 0; l < Xm.cols(); ++l) {
        double col = Xm(i, l);
        for (int k = 0; k < q; ++k) col -= phi[static_cast<std::size_t>(k)] * Xm(i - k - 1, l);
        fx += col * beta[l];
      }
      double resid = fy - fx;
      s += (resid > 0.0 ? tau : tau - 1.0) * Xm(i - 1, j);
    }
    double s_scale = 0.0;
    for (Eigen::Index i = q; i < n; ++i) s_scale += std::abs(Xm(i - 1, j));
    if (std::abs(s) < 1e-6 * (s_scale + 1e-12)) continue;

    double direction = s > 0.0 ? -1.0 : 1.0;
    double t = 0.5;
    for (int shrink = 0; shrink < 60; ++shrink, t *= 0.5) {
      std::vector<double> phi_a = phi, phi_b = phi;
      phi_a[0] += t;
      phi_b[0] -= t;
      Eigen::VectorXd beta_a = beta, beta_b = beta;
      beta_a[j] += direction * t;
      beta_b[j] -= direction * t;
      double fa = objective(beta_a, phi_a);
      double fb = objective(beta_b, phi_b);
      double fm = objective(beta, phi);
      double margin = fm - 0.5 * (fa + fb);
      if (margin > config.required_margin) {
        w.beta_a = beta_a;
        w.beta_b = beta_b;
        w.phi_a = phi_a;
        w.phi_b = phi_b;
        w.f_a = fa;
        w.f_b = fb;
        w.f_mid = fm;
        w.margin = margin;
        return w;
      }
    }
  }
  throw std::runtime_error("nonconvexity witness: no certified violation found in budget");
}

}  // namespace quarts
