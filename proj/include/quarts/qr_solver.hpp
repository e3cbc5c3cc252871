#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "quarts/types.hpp"

namespace quarts {

enum class QrStatus { optimal, max_iterations, degenerate };

/**
 * @brief Result of a quantile regression fit.
 *
 * `objective` is the achieved check-loss sum, recomputable from `residuals`
 * and `tau`. `zero_residual_count` records the basic-solution property: a
 * vertex solution interpolates at least as many points as there are columns.
 */
struct QrFit {
  Eigen::VectorXd beta;
  double tau = 0.5;
  double objective = 0.0;
  Eigen::VectorXd residuals;
  int iterations = 0;
  QrStatus status = QrStatus::optimal;
  Eigen::Index zero_residual_count = 0;
  bool certificate_verified = false;
};

namespace detail {

inline void check_full_column_rank(const Eigen::MatrixXd& X, const char* what) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  Eigen::Index rank = qr.rank();
  if (rank < X.cols()) {
    const auto& perm = qr.colsPermutation().indices();
    std::string cols;
    for (Eigen::Index i = rank; i < X.cols(); ++i) {
      if (!cols.empty()) cols += ", ";
      cols += std::to_string(perm[i]);
    }
    throw std::invalid_argument(std::string(what) +
                                ": design matrix is rank deficient; dependent columns: " + cols);
  }
}

/**
 * @brief Feasibility of: exists v in [lo, hi]^K with rows^T v = target, within tol.
 *
 * Uses a minimum-norm start and alternating projections between the affine set
 * and the box.
 */
inline bool box_affine_feasible(const Eigen::MatrixXd& rows, const Eigen::VectorXd& target,
                                double lo, double hi, double tol) {
  Eigen::Index k = rows.rows();
  double scale = 1.0 + target.cwiseAbs().maxCoeff();
  if (k > 0) scale = std::max(scale, rows.cwiseAbs().colwise().sum().maxCoeff());
  if (k == 0) return target.cwiseAbs().maxCoeff() <= tol * scale;
  Eigen::MatrixXd At = rows.transpose();  // m x k
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(At);
  Eigen::VectorXd v = cod.solve(target);
  if ((At * v - target).cwiseAbs().maxCoeff() > tol * scale) return false;  // affine set empty
  for (int it = 0; it < 300; ++it) {
    v = v.cwiseMax(lo).cwiseMin(hi);
    Eigen::VectorXd gap = At * v - target;
    if (gap.cwiseAbs().maxCoeff() <= tol * scale) break;
    v -= cod.solve(gap);
  }
  bool in_box = (v.array() >= lo - tol).all() && (v.array() <= hi + tol).all();
  bool on_affine = (At * v - target).cwiseAbs().maxCoeff() <= tol * scale;
  return in_box && on_affine;
}

}  // namespace detail

/**
 * @brief Verifies the quantile regression subgradient optimality certificate.
 *
 * For residuals r = y - X beta, checks that weights v with v_i = tau on r_i > 0,
 * v_i = tau - 1 on r_i < 0 and v_i free in [tau - 1, tau] on r_i == 0 can be
 * chosen so every column of X is orthogonal to v, within the given tolerance.
 */
[[nodiscard]] inline bool qr_optimality_certificate(const Eigen::VectorXd& y,
                                                    const Eigen::MatrixXd& X,
                                                    const Eigen::VectorXd& beta, double tau,
                                                    double tol = 1e-6) {
  QuantileLevel check_tau(tau);
  if (y.size() != X.rows() || beta.size() != X.cols()) {
    throw std::invalid_argument("certificate: dimension mismatch");
  }
  Eigen::VectorXd r = y - X * beta;
  double zero_tol = tol * (1.0 + y.cwiseAbs().maxCoeff());
  Eigen::VectorXd g = Eigen::VectorXd::Zero(X.cols());
  std::vector<Eigen::Index> free_rows;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (r[i] > zero_tol) {
      g += tau * X.row(i).transpose();
    } else if (r[i] < -zero_tol) {
      g += (tau - 1.0) * X.row(i).transpose();
    } else {
      free_rows.push_back(i);
    }
  }
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(free_rows.size()), X.cols());
  for (std::size_t j = 0; j < free_rows.size(); ++j) rows.row(static_cast<Eigen::Index>(j)) = X.row(free_rows[j]);
  return detail::box_affine_feasible(rows, -g, tau - 1.0, tau, tol);
}

namespace detail {

struct IpmOutcome {
  Eigen::VectorXd beta;  // best primal point seen, scaled domain
  double objective = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

/// Mehrotra predictor-corrector on the bounded-variable dual of quantile regression.
inline IpmOutcome qr_interior_point(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                    double tau) {
  const Eigen::Index n = X.rows();
  const double nn = static_cast<double>(n);

  Eigen::VectorXd c = -y;
  Eigen::VectorXd b = (1.0 - tau) * (X.transpose() * Eigen::VectorXd::Ones(n));

  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 - tau);
  Eigen::VectorXd s = Eigen::VectorXd::Constant(n, tau);
  Eigen::VectorXd lambda = X.colPivHouseholderQr().solve(c);
  Eigen::VectorXd rd = c - X * lambda;
  double shift = std::max(1e-2, 0.1 * rd.cwiseAbs().mean());
  Eigen::VectorXd z = rd.cwiseMax(0.0).array() + shift;
  Eigen::VectorXd w = (-rd).cwiseMax(0.0).array() + shift;

  IpmOutcome out;
  auto consider = [&](const Eigen::VectorXd& candidate) {
    double obj = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) obj += check_loss(y[i] - X.row(i).dot(candidate), tau);
    if (obj < out.objective) {
      out.objective = obj;
      out.beta = candidate;
    }
  };

  const double mu_tol = 1e-12;
  const double feas_tol = 1e-10;
  const double b_scale = 1.0 + b.cwiseAbs().maxCoeff();
  const double c_scale = 1.0 + c.cwiseAbs().maxCoeff();
  const int max_iter = 200;

  for (int iter = 1; iter <= max_iter; ++iter) {
    out.iterations = iter;
    Eigen::VectorXd beta_iter = -lambda;
    consider(beta_iter);

    Eigen::VectorXd r_b = b - X.transpose() * x;
    Eigen::VectorXd r_u = Eigen::VectorXd::Ones(n) - x - s;
    Eigen::VectorXd r_c = c - X * lambda - z + w;
    double mu = (x.dot(z) + s.dot(w)) / (2.0 * nn);

    if (mu < mu_tol && r_b.cwiseAbs().maxCoeff() < feas_tol * b_scale &&
        r_c.cwiseAbs().maxCoeff() < feas_tol * c_scale && r_u.cwiseAbs().maxCoeff() < feas_tol) {
      out.converged = true;
      break;
    }

    Eigen::ArrayXd d = 1.0 / (z.array() / x.array() + w.array() / s.array());
    Eigen::MatrixXd M = X.transpose() * d.matrix().asDiagonal() * X;
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) {
      M.diagonal().array() += 1e-13 * (1.0 + M.trace());
      llt.compute(M);
      if (llt.info() != Eigen::Success) break;
    }

    auto solve_newton = [&](const Eigen::VectorXd& rxz, const Eigen::VectorXd& rsw,
                            Eigen::VectorXd& dx, Eigen::VectorXd& ds, Eigen::VectorXd& dl,
                            Eigen::VectorXd& dz, Eigen::VectorXd& dw) {
      Eigen::VectorXd h = r_c.array() - rxz.array() / x.array() + rsw.array() / s.array() -
                          w.array() * r_u.array() / s.array();
      Eigen::VectorXd rhs = r_b + X.transpose() * (d * h.array()).matrix();
      dl = llt.solve(rhs);
      dx = (d * ((X * dl).array() - h.array())).matrix();
      ds = r_u - dx;
      dz = ((rxz.array() - z.array() * dx.array()) / x.array()).matrix();
      dw = ((rsw.array() - w.array() * ds.array()) / s.array()).matrix();
    };

    auto max_step = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
      double a = 1.0;
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
      }
      return a;
    };

    Eigen::VectorXd dx, ds, dl, dz, dw;
    Eigen::VectorXd rxz = (-x.array() * z.array()).matrix();
    Eigen::VectorXd rsw = (-s.array() * w.array()).matrix();
    solve_newton(rxz, rsw, dx, ds, dl, dz, dw);

    double ap = std::min(max_step(x, dx), max_step(s, ds));
    double ad = std::min(max_step(z, dz), max_step(w, dw));
    double mu_aff = ((x + ap * dx).dot(z + ad * dz) + (s + ap * ds).dot(w + ad * dw)) / (2.0 * nn);
    double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 1e-8, 1.0);

    Eigen::VectorXd rxz_c =
        (sigma * mu - x.array() * z.array() - dx.array() * dz.array()).matrix();
    Eigen::VectorXd rsw_c =
        (sigma * mu - s.array() * w.array() - ds.array() * dw.array()).matrix();
    solve_newton(rxz_c, rsw_c, dx, ds, dl, dz, dw);

    const double eta = 0.9995;
    ap = std::min(1.0, eta * std::min(max_step(x, dx), max_step(s, ds)));
    ad = std::min(1.0, eta * std::min(max_step(z, dz), max_step(w, dw)));
    if (ap < 1e-12 && ad < 1e-12) break;

    x += ap * dx;
    s += ap * ds;
    lambda += ad * dl;
    z += ad * dz;
    w += ad * dw;
  }
  consider(-lambda);
  return out;
}

/// Core solve on validated data; standardizes, runs the interior point method,
/// then attempts crossover to a certified vertex.
inline QrFit solve_qr(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, double tau,
                      const char* what) {
  QuantileLevel check_tau(tau);
  if (y.size() != X.rows()) throw std::invalid_argument(std::string(what) + ": y/X row mismatch");
  if (!y.allFinite() || !X.allFinite()) {
    throw std::invalid_argument(std::string(what) + ": non-finite input");
  }
  if (X.rows() <= X.cols()) {
    throw std::invalid_argument(std::string(what) + ": need more rows than columns");
  }
  check_full_column_rank(X, what);

  const Eigen::Index n = X.rows();
  const Eigen::Index m = X.cols();

  Eigen::VectorXd col_scale(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    double a = X.col(j).cwiseAbs().maxCoeff();
    col_scale[j] = a > 0.0 ? a : 1.0;
  }
  double y_scale = y.cwiseAbs().maxCoeff();
  if (y_scale <= 0.0) y_scale = 1.0;
  Eigen::MatrixXd Xs = X * col_scale.cwiseInverse().asDiagonal();
  Eigen::VectorXd ys = y / y_scale;

  IpmOutcome ipm = qr_interior_point(ys, Xs, tau);

  Eigen::VectorXd beta_s = ipm.beta;
  Eigen::VectorXd res_s = ys - Xs * beta_s;
  double obj_s = check_loss_sum({res_s.data(), static_cast<std::size_t>(res_s.size())}, tau);
  bool certified = false;
  bool polished = false;

  // Crossover: try to land on an interpolating vertex certified optimal.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return std::abs(res_s[a]) < std::abs(res_s[b]); });
  std::vector<std::vector<Eigen::Index>> trials;
  std::vector<Eigen::Index> base(order.begin(), order.begin() + m);
  trials.push_back(base);
  for (Eigen::Index extra = m; extra < std::min<Eigen::Index>(n, m + 3); ++extra) {
    for (Eigen::Index pos = 0; pos < m; ++pos) {
      auto t = base;
      t[static_cast<std::size_t>(pos)] = order[static_cast<std::size_t>(extra)];
      trials.push_back(std::move(t));
    }
  }
  for (const auto& subset : trials) {
    Eigen::MatrixXd Xh(m, m);
    Eigen::VectorXd yh(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      Xh.row(i) = Xs.row(subset[static_cast<std::size_t>(i)]);
      yh[i] = ys[subset[static_cast<std::size_t>(i)]];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Xh);
    lu.setThreshold(1e-10);
    if (!lu.isInvertible()) continue;
    Eigen::VectorXd beta_cand = lu.solve(yh);
    if (!beta_cand.allFinite()) continue;
    Eigen::VectorXd res_cand = ys - Xs * beta_cand;
    for (Eigen::Index i = 0; i < m; ++i) res_cand[subset[static_cast<std::size_t>(i)]] = 0.0;
    double obj_cand =
        check_loss_sum({res_cand.data(), static_cast<std::size_t>(res_cand.size())}, tau);
    if (obj_cand > obj_s + 1e-7 * (1.0 + std::abs(obj_s))) continue;
    if (!qr_optimality_certificate(ys, Xs, beta_cand, tau)) continue;
    beta_s = beta_cand;
    res_s = res_cand;
    obj_s = obj_cand;
    certified = true;
    polished = true;
    break;
  }
  if (!polished) certified = qr_optimality_certificate(ys, Xs, beta_s, tau);

  QrFit fit;
  fit.tau = tau;
  fit.beta = (beta_s.array() * (y_scale / col_scale.array())).matrix();
  fit.residuals = res_s * y_scale;
  fit.objective =
      check_loss_sum({fit.residuals.data(), static_cast<std::size_t>(fit.residuals.size())}, tau);
  fit.iterations = ipm.iterations;
  fit.certificate_verified = certified;
  fit.zero_residual_count =
      (fit.residuals.array() == 0.0).count();
  if (certified) {
    fit.status = QrStatus::optimal;
  } else if (!ipm.converged && ipm.iterations >= 200) {
    fit.status = QrStatus::max_iterations;
  } else {
    fit.status = QrStatus::degenerate;
  }
  return fit;
}

}  // namespace detail

/**
 * @brief Quantile regression fit: minimizes the check-loss sum of y - X beta
 *        over beta for a design matrix with intercept.
 *
 * Columns are internally rescaled to unit maximum absolute value and the
 * solution mapped back. The solver is a primal-dual interior point method with
 * crossover to an interpolating vertex verified by the subgradient certificate.
 * @throws std::invalid_argument for rank-deficient designs (offending columns
 *         are named), dimension mismatches, or non-finite input.
 */
[[nodiscard]] inline QrFit qr_fit(const Eigen::VectorXd& y, const DesignMatrix& X, double tau) {
  return detail::solve_qr(y, X.matrix(), tau, "qr_fit");
}

/// Quantile regression without an intercept column (used for autoregressions).
[[nodiscard]] inline QrFit qr_fit_no_intercept(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                               double tau) {
  return detail::solve_qr(y, X, tau, "qr_fit_no_intercept");
}

}  // namespace quarts
