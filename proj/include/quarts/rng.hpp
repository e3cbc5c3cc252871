#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>

#include "quarts/types.hpp"

namespace quarts {

/**
 * @brief Deterministic random generator with explicit seeding and per-task substreams.
 *
 * Wraps std::mt19937_64 but implements all variate transformations in-repo so
 * that draws are bit-identical across platforms and standard library versions.
 * Substreams are derived from (master_seed, task_index) and are independent of
 * the order in which tasks run.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Derives the generator for one indexed task of a seeded computation.
  [[nodiscard]] static Rng substream(std::uint64_t master_seed, std::uint64_t task_index) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                      static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(task_index),
                      static_cast<std::uint32_t>(task_index >> 32)};
    Rng r(0);
    r.engine_.seed(seq);
    return r;
  }

  [[nodiscard]] std::uint64_t raw() { return engine_(); }

  /// Uniform draw strictly inside (0, 1).
  [[nodiscard]] double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal draw (Box-Muller, one cached partner).
  [[nodiscard]] double gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi_v<double> * u2;
    cached_ = r * std::sin(angle);
    have_cached_ = true;
    return r * std::cos(angle);
  }

  [[nodiscard]] double gaussian(double mu, double sigma) { return mu + sigma * gaussian(); }

  /**
   * @brief Asymmetric Laplace draw with location 0, asymmetry tau, scale b
   *        (inverse CDF method); the tau-th quantile of the law is zero.
   */
  [[nodiscard]] double asymmetric_laplace(double tau, double b) {
    QuantileLevel check_tau(tau);
    if (!(b > 0.0)) throw std::invalid_argument("asymmetric Laplace scale must be positive");
    double u = uniform();
    if (u < tau) return b / (1.0 - tau) * std::log(u / tau);
    return -b / tau * std::log((1.0 - u) / (1.0 - tau));
  }

  /// Student t draw with integer degrees of freedom nu >= 1.
  [[nodiscard]] double student_t(int nu) {
    if (nu < 1) throw std::invalid_argument("student_t requires nu >= 1");
    double z = gaussian();
    double chi2 = 0.0;
    for (int i = 0; i < nu; ++i) {
      double g = gaussian();
      chi2 += g * g;
    }
    return z / std::sqrt(chi2 / static_cast<double>(nu));
  }

  /// Uniform index in {0, ..., n-1} for resampling.
  [[nodiscard]] std::size_t pick_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("pick_index requires n > 0");
    auto idx = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return idx >= n ? n - 1 : idx;
  }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace quarts
