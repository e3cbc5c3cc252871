#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "quarts/ar.hpp"
#include "quarts/rng.hpp"
#include "quarts/types.hpp"

namespace quarts {

/// Closed interval of calendar years.
struct YearSpan {
  long first = 0;
  long last = -1;

  [[nodiscard]] long length() const { return last - first + 1; }
  [[nodiscard]] bool contains(long year) const { return year >= first && year <= last; }
};

/**
 * @brief A multiproxy panel on a contiguous calendar axis.
 *
 * Rows run in ascending calendar order and cover exactly the union of the
 * calibration span and the reconstruction span (when one exists). The
 * instrumental series is finite over calibration years and NaN elsewhere.
 */
struct ProxyPanel {
  std::vector<long> years;
  Eigen::MatrixXd proxies;
  std::vector<std::string> proxy_ids;
  std::vector<double> instrumental;
  YearSpan calibration;
  YearSpan reconstruction;
  bool has_reconstruction = false;

  [[nodiscard]] Eigen::Index row_of(long year) const {
    if (years.empty() || year < years.front() || year > years.back()) {
      throw std::out_of_range("panel does not cover year " + std::to_string(year));
    }
    return static_cast<Eigen::Index>(year - years.front());
  }

  void validate() const {
    if (years.empty()) throw std::invalid_argument("panel has no rows");
    for (std::size_t i = 1; i < years.size(); ++i) {
      if (years[i] != years[i - 1] + 1) {
        throw std::invalid_argument("panel years must be contiguous; gap after " +
                                    std::to_string(years[i - 1]));
      }
    }
    const auto rows = static_cast<Eigen::Index>(years.size());
    if (proxies.rows() != rows) throw std::invalid_argument("proxy rows do not match years");
    if (proxies.cols() != static_cast<Eigen::Index>(proxy_ids.size())) {
      throw std::invalid_argument("proxy ids do not match proxy columns");
    }
    if (proxies.cols() < 1) throw std::invalid_argument("panel has no proxies");
    if (instrumental.size() != years.size()) {
      throw std::invalid_argument("instrumental rows do not match years");
    }
    if (calibration.length() < 2) throw std::invalid_argument("calibration span too short");
    long expect_first = calibration.first;
    long expect_last = calibration.last;
    if (has_reconstruction) {
      if (reconstruction.length() < 1) throw std::invalid_argument("empty reconstruction span");
      bool before = reconstruction.last + 1 == calibration.first;
      bool after = calibration.last + 1 == reconstruction.first;
      if (!before && !after) {
        throw std::invalid_argument(
            "reconstruction span must be adjacent to the calibration span");
      }
      expect_first = std::min(expect_first, reconstruction.first);
      expect_last = std::max(expect_last, reconstruction.last);
    }
    if (years.front() != expect_first || years.back() != expect_last) {
      throw std::invalid_argument("panel rows must cover exactly the declared spans");
    }
    if (!proxies.allFinite()) throw std::invalid_argument("proxy values must be finite");
    for (long yr = calibration.first; yr <= calibration.last; ++yr) {
      double v = instrumental[static_cast<std::size_t>(row_of(yr))];
      if (!std::isfinite(v)) {
        throw std::invalid_argument("instrumental value missing in calibration year " +
                                    std::to_string(yr));
      }
    }
  }
};

/// Innovation law used by the synthetic generator.
enum class NoiseKind : std::uint8_t { gaussian, laplace, asymmetric_laplace, student_t };

/// Recipe for a synthetic panel with known truth.
struct SyntheticSpec {
  int calibration_length = 150;
  int reconstruction_length = 100;
  int proxies = 8;
  Eigen::VectorXd beta;          ///< length proxies + 1 (intercept first); empty = generated
  std::vector<double> phi = {0.5};
  NoiseKind noise = NoiseKind::gaussian;
  double noise_scale = 1.0;      ///< sd (gaussian), scale b (laplace kinds), multiplier (t)
  double noise_tau = 0.5;        ///< asymmetry of the asymmetric Laplace law
  int t_dof = 3;
  int latent_factors = 0;        ///< 0 = independent proxies
  double proxy_noise = 0.5;      ///< idiosyncratic sd when factors are used
  std::uint64_t seed = 1;
  /// Calibration occupies the latest years and the reconstruction span sits
  /// before it (the hindcast layout); set false for a forward layout.
  bool calibration_last = true;
  long first_year = 1000;
};

/// Generating parameters and realized future values kept out of the panel.
struct TruthRecord {
  Eigen::VectorXd beta;
  std::vector<double> phi;
  NoiseKind noise = NoiseKind::gaussian;
  double noise_scale = 1.0;
  double noise_tau = 0.5;
  int t_dof = 3;
  double innovation_sd = 0.0;              ///< theoretical sd of the innovation law
  std::vector<double> response;            ///< realized response, calendar order, all years
  std::vector<double> conditional_location;  ///< response minus its innovation, calendar order
};

/// Panel plus the truth that generated it.
struct SyntheticPanel {
  ProxyPanel panel;
  TruthRecord truth;
};

/// Theoretical standard deviation of a generator noise law.
[[nodiscard]] inline double noise_sd(NoiseKind kind, double scale, double tau, int t_dof) {
  switch (kind) {
    case NoiseKind::gaussian:
      return scale;
    case NoiseKind::laplace:
      return scale * std::sqrt(2.0);
    case NoiseKind::asymmetric_laplace: {
      double t1 = 1.0 - tau;
      return scale * std::sqrt(1.0 - 2.0 * tau * t1) / (tau * t1);
    }
    case NoiseKind::student_t:
      if (t_dof <= 2) return std::numeric_limits<double>::infinity();
      return scale * std::sqrt(static_cast<double>(t_dof) / (t_dof - 2.0));
  }
  return scale;
}

namespace detail {

[[nodiscard]] inline double draw_noise(Rng& rng, const SyntheticSpec& spec) {
  switch (spec.noise) {
    case NoiseKind::gaussian:
      return spec.noise_scale * rng.gaussian();
    case NoiseKind::laplace:
      // The tau = 0.5 asymmetric law with scale c is a symmetric Laplace
      // with scale 2c, so halve to honor the standard parameterization.
      return rng.asymmetric_laplace(0.5, spec.noise_scale / 2.0);
    case NoiseKind::asymmetric_laplace:
      return rng.asymmetric_laplace(spec.noise_tau, spec.noise_scale);
    case NoiseKind::student_t:
      return spec.noise_scale * rng.student_t(spec.t_dof);
  }
  return 0.0;
}

}  // namespace detail

/**
 * @brief Draws a synthetic panel whose generating process is fully recorded.
 *
 * The response follows the fitted model class exactly: a linear map of the
 * proxies plus an AR(q) error driven by the chosen noise law. Model time
 * starts in the calibration span and continues into the reconstruction
 * span, so under the default hindcast layout model time runs against the
 * calendar and the panel exercises the orientation machinery end to end.
 * All draws come from substreams of the seed, so the panel is reproducible.
 */
[[nodiscard]] inline SyntheticPanel generate_synthetic_panel(const SyntheticSpec& spec) {
  const int n = spec.calibration_length;
  const int m = spec.reconstruction_length;
  const int p = spec.proxies;
  if (n < 4 || p < 1 || m < 0) {
    throw std::invalid_argument("synthetic panel: need calibration >= 4 rows and proxies >= 1");
  }
  if (!ar_is_stationary(spec.phi)) {
    throw std::invalid_argument("synthetic panel: phi must be stationary");
  }
  const int N = n + m;

  Eigen::VectorXd beta = spec.beta;
  if (beta.size() == 0) {
    Rng rng = Rng::substream(spec.seed, 1);
    beta.resize(p + 1);
    beta[0] = 1.0;
    for (int j = 1; j <= p; ++j) beta[j] = (2.0 * rng.uniform() - 1.0) / std::sqrt(p);
  }
  if (beta.size() != p + 1) {
    throw std::invalid_argument("synthetic panel: beta must have proxies + 1 entries");
  }

  // Proxy matrix in model order (row 0 = first calibration step).
  Eigen::MatrixXd X(N, p);
  {
    Rng rng = Rng::substream(spec.seed, 3);
    if (spec.latent_factors > 0) {
      Rng load_rng = Rng::substream(spec.seed, 2);
      Eigen::MatrixXd lambda(p, spec.latent_factors);
      for (int i = 0; i < p; ++i) {
        for (int l = 0; l < spec.latent_factors; ++l) lambda(i, l) = load_rng.gaussian();
      }
      Rng idio = Rng::substream(spec.seed, 4);
      for (int t = 0; t < N; ++t) {
        Eigen::VectorXd f(spec.latent_factors);
        for (int l = 0; l < spec.latent_factors; ++l) f[l] = rng.gaussian();
        for (int j = 0; j < p; ++j) {
          X(t, j) = lambda.row(j).dot(f) / std::sqrt(static_cast<double>(spec.latent_factors)) +
                    spec.proxy_noise * idio.gaussian();
        }
      }
    } else {
      for (int t = 0; t < N; ++t) {
        for (int j = 0; j < p; ++j) X(t, j) = rng.gaussian();
      }
    }
  }

  // Error path from a burned-in AR recursion over the noise law.
  constexpr std::size_t burn = 500;
  std::vector<double> innovations(static_cast<std::size_t>(N) + burn);
  {
    Rng rng = Rng::substream(spec.seed, 0);
    for (double& v : innovations) v = detail::draw_noise(rng, spec);
  }
  std::vector<double> eps = simulate_stationary(spec.phi, innovations, burn);

  std::vector<double> response(static_cast<std::size_t>(N));
  std::vector<double> location(static_cast<std::size_t>(N));
  for (int t = 0; t < N; ++t) {
    double surface = beta[0] + X.row(t).dot(beta.tail(p));
    response[static_cast<std::size_t>(t)] = surface + eps[static_cast<std::size_t>(t)];
    location[static_cast<std::size_t>(t)] =
        surface + eps[static_cast<std::size_t>(t)] - innovations[burn + static_cast<std::size_t>(t)];
  }

  // Lay the model-order arrays onto the calendar.
  SyntheticPanel out;
  ProxyPanel& panel = out.panel;
  panel.years.resize(static_cast<std::size_t>(N));
  for (int r = 0; r < N; ++r) panel.years[static_cast<std::size_t>(r)] = spec.first_year + r;
  panel.proxies.resize(N, p);
  panel.instrumental.assign(static_cast<std::size_t>(N),
                            std::numeric_limits<double>::quiet_NaN());
  out.truth.response.resize(static_cast<std::size_t>(N));
  out.truth.conditional_location.resize(static_cast<std::size_t>(N));

  auto model_index = [&](int row) { return spec.calibration_last ? N - 1 - row : row; };
  for (int r = 0; r < N; ++r) {
    int t = model_index(r);
    panel.proxies.row(r) = X.row(t);
    out.truth.response[static_cast<std::size_t>(r)] = response[static_cast<std::size_t>(t)];
    out.truth.conditional_location[static_cast<std::size_t>(r)] =
        location[static_cast<std::size_t>(t)];
  }

  if (spec.calibration_last) {
    panel.calibration = {spec.first_year + m, spec.first_year + N - 1};
    panel.reconstruction = {spec.first_year, spec.first_year + m - 1};
  } else {
    panel.calibration = {spec.first_year, spec.first_year + n - 1};
    panel.reconstruction = {spec.first_year + n, spec.first_year + N - 1};
  }
  panel.has_reconstruction = m > 0;
  for (long yr = panel.calibration.first; yr <= panel.calibration.last; ++yr) {
    auto r = static_cast<std::size_t>(yr - spec.first_year);
    panel.instrumental[r] = out.truth.response[r];
  }
  panel.proxy_ids.resize(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) panel.proxy_ids[static_cast<std::size_t>(j)] = "proxy_" + std::to_string(j + 1);

  out.truth.beta = beta;
  out.truth.phi = spec.phi;
  out.truth.noise = spec.noise;
  out.truth.noise_scale = spec.noise_scale;
  out.truth.noise_tau = spec.noise_tau;
  out.truth.t_dof = spec.t_dof;
  out.truth.innovation_sd = noise_sd(spec.noise, spec.noise_scale, spec.noise_tau, spec.t_dof);

  panel.validate();
  return out;
}

}  // namespace quarts
