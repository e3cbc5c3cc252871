#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "quarts/ar.hpp"
#include "quarts/quarts_fit.hpp"
#include "quarts/types.hpp"

namespace quarts {

namespace detail {

/**
 * @brief Alternating least-squares fit with AR residuals on masked rows.
 *
 * The regression step runs ordinary least squares on the quasi-differenced
 * response and quasi-differenced design (both sides filtered, unlike the
 * quantile fitter, whose regression step uses raw design rows); the
 * autoregression step is intercept-free least squares of residuals on lags.
 */
inline MaskedFit gls_fit_masked(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, int q,
                                const QuartsConfig& cfg, const std::vector<RowRole>& roles) {
  const Eigen::Index n = y.size();
  const Eigen::Index m = X.cols();
  if (X.rows() != n || roles.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("gls fit: dimension mismatch");
  }
  if (q < 0) throw std::invalid_argument("gls fit: q must be nonnegative");
  std::vector<Eigen::Index> rows = regression_rows(roles, q);
  auto nr = static_cast<Eigen::Index>(rows.size());
  if (nr <= m + q) throw std::invalid_argument("gls fit: too few usable rows");

  MaskedFit out;
  auto ols = [](const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    if (qr.rank() < A.cols()) {
      throw std::invalid_argument("gls fit: design rank deficient on usable rows");
    }
    return Eigen::VectorXd(qr.solve(b));
  };

  if (q == 0) {
    Eigen::MatrixXd Xr(nr, m);
    Eigen::VectorXd yr(nr);
    for (Eigen::Index r = 0; r < nr; ++r) {
      Xr.row(r) = X.row(rows[static_cast<std::size_t>(r)]);
      yr[r] = y[rows[static_cast<std::size_t>(r)]];
    }
    out.beta = ols(Xr, yr);
    Eigen::VectorXd res = yr - Xr * out.beta;
    out.objective = res.squaredNorm();
    out.converged = true;
    out.exit = AlternationExit::converged;
    out.iterations = 1;
    out.trace = {out.objective};
    return out;
  }

  Eigen::VectorXd eps = Eigen::VectorXd::Zero(n);
  const double y_span = y.cwiseAbs().maxCoeff();

  auto step = [&](const Eigen::VectorXd& prev) {
    Eigen::VectorXd phi_prev = prev.tail(q);
    Eigen::MatrixXd Xr(nr, m);
    Eigen::VectorXd yr(nr);
    for (Eigen::Index r = 0; r < nr; ++r) {
      Eigen::Index i = rows[static_cast<std::size_t>(r)];
      double v = y[i];
      Eigen::VectorXd xrow = X.row(i);
      for (int k = 1; k <= q; ++k) {
        v -= phi_prev[k - 1] * y[i - k];
        xrow -= phi_prev[k - 1] * X.row(i - k);
      }
      yr[r] = v;
      Xr.row(r) = xrow;
    }
    Eigen::VectorXd beta_new = ols(Xr, yr);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (roles[static_cast<std::size_t>(i)] != RowRole::holdout) {
        eps[i] = y[i] - X.row(i).dot(beta_new);
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
      phi_new = ols(lags, lhs);
    }
    double objective = 0.0;
    for (Eigen::Index r = 0; r < nr; ++r) {
      Eigen::Index i = rows[static_cast<std::size_t>(r)];
      double d = eps[i];
      for (int k = 1; k <= q; ++k) d -= phi_new[k - 1] * eps[i - k];
      objective += d * d;
    }
    Eigen::VectorXd next(m + q);
    next.head(m) = beta_new;
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
 * @brief Least-squares analogue of the quantile fit: same alternating
 *        structure with squared-error objective and OLS subproblems.
 */
struct GlsModel {
  Eigen::VectorXd beta;
  ArCoefficients phi;
  int q = 0;
  Eigen::VectorXd residuals;
  Eigen::VectorXd innovations;
  std::vector<double> objective_trace;
  double objective = 0.0;
  bool converged = false;
  detail::AlternationExit exit = detail::AlternationExit::iteration_cap;
  int iterations = 0;
};

/**
 * @brief Iterated feasible generalized least squares with AR(q) residuals.
 *
 * With q = 0 this is ordinary least squares. Convergence and fallback rules
 * match the quantile fitter.
 */
[[nodiscard]] inline GlsModel gls_fit(const Eigen::VectorXd& y, const DesignMatrix& X, int q,
                                      const QuartsConfig& config = {}) {
  const Eigen::Index n = y.size();
  if (n <= X.cols() + q) {
    throw std::invalid_argument("gls_fit: need n greater than q plus the column count");
  }
  std::vector<RowRole> roles(static_cast<std::size_t>(n), RowRole::active);
  detail::MaskedFit fit = detail::gls_fit_masked(y, X.matrix(), q, config, roles);

  GlsModel model;
  model.beta = fit.beta;
  model.phi = ArCoefficients(fit.phi, 0.5);
  model.q = q;
  model.residuals = y - X.matrix() * fit.beta;
  std::vector<double> res(model.residuals.data(), model.residuals.data() + n);
  std::vector<double> innov = quasi_difference(res, fit.phi);
  model.innovations =
      Eigen::Map<Eigen::VectorXd>(innov.data(), static_cast<Eigen::Index>(innov.size()));
  model.objective_trace = std::move(fit.trace);
  model.objective = fit.objective;
  model.converged = fit.converged;
  model.exit = fit.exit;
  model.iterations = fit.iterations;
  return model;
}

}  // namespace quarts
