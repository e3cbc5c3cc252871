// Unit tests for the numerical building blocks: check loss, special
// functions, RNG streams, serial-correlation and normality diagnostics, AR
// utilities, the quantile regression solver, PCA, the smoothing spline,
// innovation laws, and CSV round trips.
//
// Expected values are either exact arithmetic, closed forms, or independent
// oracles coded here (exhaustive vertex enumeration, IRLS least absolute
// deviations, adaptive-Simpson quadrature, dense smoother-trace evaluation).
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "quarts/quarts.hpp"

using Catch::Approx;
using namespace quarts;

namespace {

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

/// Draws fresh innovations and runs the stationary AR recursion, discarding a
/// burn-in long enough to forget the zero start.
std::vector<double> simulate_ar(const std::vector<double>& phi, std::size_t n, Rng& rng,
                                std::size_t burn = 500) {
  std::vector<double> eps(n + burn);
  for (double& v : eps) v = rng.gaussian();
  return simulate_stationary(phi, eps, burn);
}

/// Exhaustive quantile regression oracle: an optimum lies at a vertex that
/// interpolates cols(X) points, so the global minimum is the best objective
/// over all full-rank row subsets of that size.
double enumerate_qr_objective(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, double tau) {
  const Eigen::Index n = X.rows();
  const Eigen::Index m = X.cols();
  double best = std::numeric_limits<double>::infinity();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m));
  std::function<void(Eigen::Index, Eigen::Index)> rec = [&](Eigen::Index start, Eigen::Index got) {
    if (got == m) {
      Eigen::MatrixXd A(m, m);
      Eigen::VectorXd b(m);
      for (Eigen::Index r = 0; r < m; ++r) {
        A.row(r) = X.row(idx[static_cast<std::size_t>(r)]);
        b[r] = y[idx[static_cast<std::size_t>(r)]];
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
      if (!lu.isInvertible()) return;
      Eigen::VectorXd beta = lu.solve(b);
      Eigen::VectorXd res = y - X * beta;
      best = std::min(best, check_loss_sum(as_span(res), tau));
      return;
    }
    for (Eigen::Index i = start; i < n; ++i) {
      idx[static_cast<std::size_t>(got)] = i;
      rec(i + 1, got + 1);
    }
  };
  rec(0, 0);
  return best;
}

/// Independent least-absolute-deviations fit by iteratively reweighted least
/// squares; returns the converged objective.
double lad_irls_objective(const Eigen::VectorXd& y, const Eigen::MatrixXd& X) {
  Eigen::VectorXd beta = (X.transpose() * X).ldlt().solve(X.transpose() * y);
  for (int it = 0; it < 2000; ++it) {
    Eigen::VectorXd r = y - X * beta;
    Eigen::VectorXd w = r.cwiseAbs().cwiseMax(1e-10).cwiseInverse();
    Eigen::MatrixXd Xw = w.asDiagonal() * X;
    Eigen::VectorXd next = (X.transpose() * Xw).ldlt().solve(Xw.transpose() * y);
    if ((next - beta).cwiseAbs().maxCoeff() < 1e-12) {
      beta = next;
      break;
    }
    beta = next;
  }
  Eigen::VectorXd r = y - X * beta;
  return 0.5 * r.cwiseAbs().sum();
}

double chi2_density(double t, double df) {
  if (t <= 0.0) return 0.0;
  double log_norm = -0.5 * df * std::log(2.0) - std::lgamma(0.5 * df);
  return std::exp(log_norm + (0.5 * df - 1.0) * std::log(t) - 0.5 * t);
}

double simpson(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_simpson(double a, double b, double fa, double fm, double fb, double whole,
                        double tol, int depth, int force, double df) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m);
  double rm = 0.5 * (m + b);
  double flm = chi2_density(lm, df);
  double frm = chi2_density(rm, df);
  double left = simpson(a, m, fa, flm, fm);
  double right = simpson(m, b, fm, frm, fb);
  // `force` levels always subdivide so a narrow hump between the three seed
  // points cannot masquerade as zero area.
  if (force <= 0 && (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)) {
    return left + right + (left + right - whole) / 15.0;
  }
  return adaptive_simpson(a, m, fa, flm, fm, left, tol / 2.0, depth - 1, force - 1, df) +
         adaptive_simpson(m, b, fm, frm, fb, right, tol / 2.0, depth - 1, force - 1, df);
}

/// Upper-tail chi-square probability by adaptive Simpson quadrature of the
/// density over [x, x + cutoff]; the truncated mass decays like exp(-t/2)
/// and is far below the comparison tolerance.
double chi2_survival_quadrature(double x, double df) {
  double upper = x + 200.0 + 20.0 * df;
  double fa = chi2_density(x, df);
  double fb = chi2_density(upper, df);
  double fm = chi2_density(0.5 * (x + upper), df);
  double whole = simpson(x, upper, fa, fm, fb);
  return adaptive_simpson(x, upper, fa, fm, fb, whole, 1e-13, 48, 10, df);
}

/// Smoother-matrix trace at a fixed penalty by applying the smoother to
/// every unit vector; the dense counterpart of the banded trace recurrence.
double dense_smoother_trace(std::size_t n, double lambda) {
  double trace = 0.0;
  std::vector<double> e(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    e[i] = 1.0;
    std::vector<double> s = smoothing_spline_apply(e, lambda);
    trace += s[i];
    e[i] = 0.0;
  }
  return trace;
}

}  // namespace

// ===========================================================================
// Check loss and core value types
// ===========================================================================

TEST_CASE("check loss: piecewise form and symmetry", "[types]") {
  CHECK(check_loss(2.0, 0.75) == Approx(1.5).margin(1e-15));
  CHECK(check_loss(-2.0, 0.75) == Approx(0.5).margin(1e-15));
  CHECK(check_loss(0.0, 0.3) == 0.0);

  SECTION("quantile symmetry rho_tau(x) = rho_{1-tau}(-x)") {
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
      double x = 4.0 * rng.gaussian();
      double tau = 0.02 + 0.96 * rng.uniform();
      CHECK(check_loss(x, tau) == Approx(check_loss(-x, 1.0 - tau)).margin(1e-12));
      CHECK(check_loss(x, tau) >= 0.0);
    }
  }
  SECTION("convexity: midpoint inequality") {
    Rng rng(12);
    for (int i = 0; i < 200; ++i) {
      double a = 4.0 * rng.gaussian();
      double b = 4.0 * rng.gaussian();
      double tau = 0.02 + 0.96 * rng.uniform();
      double mid = check_loss(0.5 * (a + b), tau);
      CHECK(mid <= 0.5 * (check_loss(a, tau) + check_loss(b, tau)) + 1e-12);
    }
  }
}

TEST_CASE("quantile level validation", "[types]") {
  CHECK_THROWS_AS(QuantileLevel(0.0), std::invalid_argument);
  CHECK_THROWS_AS(QuantileLevel(1.0), std::invalid_argument);
  CHECK_THROWS_AS(QuantileLevel(-0.2), std::invalid_argument);
  CHECK(QuantileLevel(0.25).value() == 0.25);
}

TEST_CASE("design matrix with intercept", "[types]") {
  Eigen::MatrixXd P(4, 2);
  P << 1, 2, 3, 4, 5, 6, 7, 8;
  DesignMatrix d = DesignMatrix::with_intercept(P);
  REQUIRE(d.cols() == 3);
  CHECK(d.matrix().col(0).isConstant(1.0));
  CHECK(d.matrix().col(1)(2) == 5.0);
  SECTION("a square augmented design is refused") {
    Eigen::MatrixXd square(3, 2);
    square << 1, 2, 3, 4, 5, 6;
    CHECK_THROWS_AS(DesignMatrix::with_intercept(square), std::invalid_argument);
  }
}

TEST_CASE("asymmetric Laplace mean matches its sampler", "[types][rng]") {
  CHECK(asymmetric_laplace_mean(0.5, 0.7) == Approx(0.0).margin(1e-12));
  for (double tau : {0.3, 0.75}) {
    Rng rng(77);
    double sum = 0.0;
    const int n = 400000;
    for (int i = 0; i < n; ++i) sum += rng.asymmetric_laplace(tau, 0.6);
    CHECK(sum / n == Approx(asymmetric_laplace_mean(tau, 0.6)).margin(0.01));
  }
}

// ===========================================================================
// Special functions
// ===========================================================================

TEST_CASE("normal cdf and quantile against reference values", "[special]") {
  CHECK(normal_cdf(0.0) == Approx(0.5).margin(1e-15));
  CHECK(normal_cdf(1.0) == Approx(0.84134474606854293).margin(1e-12));
  CHECK(normal_cdf(1.96) == Approx(0.97500210485177963).margin(1e-12));
  CHECK(normal_quantile(0.975) == Approx(1.959963984540054).margin(1e-8));
  CHECK(normal_quantile(0.95) == Approx(1.6448536269514722).margin(1e-8));
  CHECK(normal_quantile(0.5) == Approx(0.0).margin(1e-12));
  CHECK_THROWS_AS(normal_quantile(0.0), std::invalid_argument);
  CHECK_THROWS_AS(normal_quantile(1.0), std::invalid_argument);

  SECTION("round trip over a probability grid") {
    for (double p = 0.001; p < 0.9995; p += 0.0007) {
      CHECK(normal_cdf(normal_quantile(p)) == Approx(p).margin(1e-9));
    }
  }
}

TEST_CASE("chi-square survival: closed forms and quadrature oracle", "[special]") {
  SECTION("closed forms at small even and odd df") {
    auto sf1 = [](double x) { return 2.0 * (1.0 - normal_cdf(std::sqrt(x))); };
    CHECK(chi_squared_survival(3.841458820694124, 1.0) ==
          Approx(sf1(3.841458820694124)).margin(1e-10));
    CHECK(chi_squared_survival(5.991464547107979, 2.0) ==
          Approx(std::exp(-5.991464547107979 / 2.0)).margin(1e-12));
    double x3 = 7.814727903251179;
    const double two_over_pi = 0.63661977236758138;
    CHECK(chi_squared_survival(x3, 3.0) ==
          Approx(sf1(x3) + std::exp(-x3 / 2.0) * std::sqrt(x3 * two_over_pi)).margin(1e-10));
    double x4 = 9.487729036781154;
    CHECK(chi_squared_survival(x4, 4.0) == Approx(std::exp(-x4 / 2.0) * (1.0 + x4 / 2.0)).margin(1e-12));
    double x6 = 12.591587243743977;
    CHECK(chi_squared_survival(x6, 6.0) ==
          Approx(std::exp(-x6 / 2.0) * (1.0 + x6 / 2.0 + x6 * x6 / 8.0)).margin(1e-12));
  }
  SECTION("quadrature oracle over a grid") {
    for (double df : {1.0, 2.0, 3.0, 5.0, 10.0, 25.0}) {
      for (double x : {0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0}) {
        CHECK(chi_squared_survival(x, df) == Approx(chi2_survival_quadrature(x, df)).margin(1e-8));
      }
    }
  }
  SECTION("edges") {
    CHECK(chi_squared_survival(0.0, 3.0) == Approx(1.0).margin(1e-14));
    CHECK(chi_squared_survival(1e4, 2.0) == Approx(0.0).margin(1e-14));
  }
}

// ===========================================================================
// Random streams
// ===========================================================================

TEST_CASE("rng determinism and substreams", "[rng]") {
  SECTION("same seed, same draws") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) REQUIRE(a.raw() == b.raw());
  }
  SECTION("substreams differ from each other and from the base stream") {
    Rng base(9);
    Rng s0 = Rng::substream(9, 0);
    Rng s1 = Rng::substream(9, 1);
    int equal01 = 0, equal0b = 0;
    for (int i = 0; i < 64; ++i) {
      std::uint64_t a = s0.raw(), b = s1.raw(), c = base.raw();
      equal01 += a == b;
      equal0b += a == c;
    }
    CHECK(equal01 <= 1);
    CHECK(equal0b <= 1);
  }
  SECTION("substream reproducibility") {
    Rng a = Rng::substream(42, 7);
    Rng b = Rng::substream(42, 7);
    for (int i = 0; i < 32; ++i) REQUIRE(a.raw() == b.raw());
  }
  SECTION("uniform stays inside (0,1); pick_index stays in range") {
    Rng rng(5);
    for (int i = 0; i < 20000; ++i) {
      double u = rng.uniform();
      REQUIRE(u > 0.0);
      REQUIRE(u < 1.0);
    }
    for (int i = 0; i < 1000; ++i) REQUIRE(rng.pick_index(7) < 7);
    CHECK_THROWS_AS(rng.pick_index(0), std::invalid_argument);
  }
  SECTION("gaussian and student t moments") {
    Rng rng(31);
    double sum = 0.0, ss = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      double g = rng.gaussian();
      sum += g;
      ss += g * g;
    }
    CHECK(sum / n == Approx(0.0).margin(0.01));
    CHECK(std::sqrt(ss / n) == Approx(1.0).margin(0.01));
    double t_sum = 0.0;
    int extremes = 0;
    for (int i = 0; i < n; ++i) {
      double t = rng.student_t(3);
      t_sum += t;
      extremes += std::abs(t) > 4.0;
    }
    CHECK(t_sum / n == Approx(0.0).margin(0.05));
    // t3 mass beyond |4| is about 1.4%, an order above the Gaussian.
    CHECK(extremes > n / 400);
  }
}

// ===========================================================================
// Serial-correlation and normality diagnostics
// ===========================================================================

TEST_CASE("acf base cases", "[diagnostics]") {
  SECTION("lag zero is one") {
    std::vector<double> x = {1.0, 4.0, 2.0, 8.0, 5.0};
    CHECK(acf(x, 2)[0] == 1.0);
  }
  SECTION("alternating series, lag one") {
    std::vector<double> x(100);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = i % 2 == 0 ? 1.0 : -1.0;
    CHECK(acf(x, 1)[1] == Approx(-0.99).margin(1e-12));
  }
  SECTION("iid normal stays inside the Bartlett band") {
    Rng rng(101);
    std::vector<double> x(10000);
    for (double& v : x) v = rng.gaussian();
    CHECK(std::abs(acf(x, 1)[1]) < 0.05);
  }
  SECTION("errors") {
    std::vector<double> constant(10, 3.0);
    CHECK_THROWS_AS(acf(constant, 2), std::invalid_argument);
    std::vector<double> tiny = {1.0};
    CHECK_THROWS_AS(acf(tiny, 0), std::invalid_argument);
    std::vector<double> x = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(acf(x, 3), std::invalid_argument);
  }
}

TEST_CASE("pacf recursion against model structure", "[diagnostics]") {
  SECTION("AR(1) signature: spike at lag one, nothing at lag two") {
    Rng rng(202);
    std::vector<double> x = simulate_ar({0.6}, 5000, rng);
    std::vector<double> p = pacf(x, 5);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == Approx(0.6).margin(0.05));
    CHECK(std::abs(p[2]) < 1.96 / std::sqrt(5000.0));
  }
  SECTION("white noise: at most two of twenty lags escape the band") {
    Rng rng(203);
    std::vector<double> x(5000);
    for (double& v : x) v = rng.gaussian();
    std::vector<double> p = pacf(x, 20);
    int outside = 0;
    for (std::size_t k = 1; k <= 20; ++k) outside += std::abs(p[k]) > 1.96 / std::sqrt(5000.0);
    CHECK(outside <= 2);
  }
  SECTION("lag-one pacf equals lag-one acf") {
    Rng rng(204);
    std::vector<double> x(500);
    for (double& v : x) v = rng.gaussian();
    CHECK(pacf(x, 3)[1] == Approx(acf(x, 3)[1]).margin(1e-12));
  }
}

TEST_CASE("Ljung-Box statistic: exact arithmetic and null size", "[diagnostics]") {
  SECTION("zero autocorrelations give Q = 0, p = 1") {
    std::vector<double> r = {1.0, 0.0, 0.0, 0.0};
    LjungBoxResult res = detail::ljung_box_from_acf(r, 50, 3);
    CHECK(res.statistic == 0.0);
    CHECK(res.p_value == 1.0);
  }
  SECTION("direct arithmetic at n=100, lag 2, r = {0.3, 0.1}") {
    std::vector<double> r = {1.0, 0.3, 0.1};
    LjungBoxResult res = detail::ljung_box_from_acf(r, 100, 2);
    // 100 * 102 * (0.09/99 + 0.01/98), and chi-square(2) survival exp(-Q/2).
    CHECK(res.statistic == Approx(10.313543599257883).margin(1e-10));
    CHECK(res.p_value == Approx(0.0057602649928528826).margin(1e-10));
    CHECK(res.p_value == Approx(std::exp(-res.statistic / 2.0)).margin(1e-12));
  }
  SECTION("rejection rate on white noise is near the nominal level") {
    int rejections = 0;
    const int runs = 1000;
    for (int r = 0; r < runs; ++r) {
      Rng rng = Rng::substream(7000, static_cast<std::uint64_t>(r));
      std::vector<double> x(1000);
      for (double& v : x) v = rng.gaussian();
      rejections += ljung_box(x, 10).p_value < 0.05;
    }
    CHECK(rejections >= 20);
    CHECK(rejections <= 80);
  }
}

TEST_CASE("Anderson-Darling normality test", "[diagnostics]") {
  SECTION("size on true normal samples") {
    int rejections = 0;
    const int runs = 1000;
    for (int r = 0; r < runs; ++r) {
      Rng rng = Rng::substream(8100, static_cast<std::uint64_t>(r));
      std::vector<double> x(500);
      for (double& v : x) v = rng.gaussian();
      rejections += anderson_darling_normal(x).p_value < 0.05;
    }
    CHECK(rejections >= 20);
    CHECK(rejections <= 80);
  }
  SECTION("uniform sample is rejected hard") {
    Rng rng(8200);
    std::vector<double> x(500);
    for (double& v : x) v = rng.uniform();
    CHECK(anderson_darling_normal(x).p_value < 0.01);
  }
  SECTION("an exact normal quantile grid is as normal as it gets") {
    std::vector<double> x(200);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = normal_quantile((static_cast<double>(i) + 0.5) / 200.0);
    }
    CHECK(anderson_darling_normal(x).p_value > 0.5);
  }
  SECTION("guards") {
    std::vector<double> seven(7, 0.0);
    CHECK_THROWS_AS(anderson_darling_normal(seven), std::invalid_argument);
    std::vector<double> flat(20, 1.0);
    CHECK_THROWS_AS(anderson_darling_normal(flat), std::invalid_argument);
  }
}

TEST_CASE("diagnostics report aggregates the tests", "[diagnostics]") {
  Rng rng(8300);
  std::vector<double> ar = simulate_ar({0.7}, 2000, rng);
  DiagnosticsReport coupled = compute_diagnostics(ar, {});
  CHECK(coupled.ar_behavior_detected);
  std::vector<double> noise(2000);
  for (double& v : noise) v = rng.gaussian();
  DiagnosticsReport quiet = compute_diagnostics(noise, {});
  CHECK_FALSE(quiet.ar_behavior_detected);
  CHECK(quiet.acf[0] == 1.0);
  CHECK(quiet.ljung_box.p_value >= 0.0);
  CHECK(quiet.ljung_box.p_value <= 1.0);
}

// ===========================================================================
// AR utilities
// ===========================================================================

TEST_CASE("quasi-differencing and its inverse", "[ar]") {
  SECTION("order zero is the identity") {
    std::vector<double> x = {3.0, -1.0, 2.0};
    std::vector<double> empty_phi;
    CHECK(quasi_difference(x, empty_phi) == x);
  }
  SECTION("round trip restores the series") {
    Rng rng(40);
    std::vector<double> x(200);
    for (double& v : x) v = rng.gaussian();
    std::vector<double> phi = {0.5, -0.3};
    std::vector<double> d = quasi_difference(x, phi);
    REQUIRE(d.size() == x.size() - 2);
    std::vector<double> back = un_difference(d, std::span<const double>(x.data(), 2), phi);
    REQUIRE(back.size() == x.size());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(back[i] == Approx(x[i]).margin(1e-12));
  }
}

TEST_CASE("stationarity checks on AR coefficients", "[ar]") {
  CHECK(ar_is_stationary(std::vector<double>{0.5}));
  CHECK_FALSE(ar_is_stationary(std::vector<double>{1.01}));
  CHECK(ar_is_stationary(std::vector<double>{0.5, 0.3}));
  CHECK_FALSE(ar_is_stationary(std::vector<double>{0.5, 0.6}));
  std::vector<double> empty;
  CHECK(ar_is_stationary(empty));
}

TEST_CASE("stationary simulation matches AR(1) theory", "[ar]") {
  SECTION("order zero returns the post-burn-in innovations verbatim") {
    Rng rng(50);
    std::vector<double> eps(120);
    for (double& v : eps) v = rng.gaussian();
    std::vector<double> empty_phi;
    std::vector<double> sim = simulate_stationary(empty_phi, eps, 20);
    REQUIRE(sim.size() == 100);
    for (std::size_t i = 0; i < sim.size(); ++i) CHECK(sim[i] == eps[i + 20]);
  }
  SECTION("non-stationary coefficients are refused") {
    std::vector<double> eps(600, 0.1);
    CHECK_THROWS_AS(simulate_stationary(std::vector<double>{1.05}, eps, 100),
                    std::invalid_argument);
  }
  SECTION("variance of AR(1) at phi = 0.5") {
    Rng rng(51);
    std::vector<double> x = simulate_ar({0.5}, 100000, rng);
    double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    double var = ss / static_cast<double>(x.size() - 1);
    CHECK(var == Approx(4.0 / 3.0).epsilon(0.05));
  }
}

TEST_CASE("mean propagation through the AR recursion", "[ar]") {
  SECTION("order zero is a constant sequence") {
    std::vector<double> empty_phi;
    std::vector<double> nostate;
    std::vector<double> m = propagate_mean(empty_phi, nostate, 0.4, 5);
    REQUIRE(m.size() == 5);
    for (double v : m) CHECK(v == 0.4);
  }
  SECTION("long-horizon fixed point") {
    std::vector<double> phi = {0.6, -0.2};
    std::vector<double> state = {2.0, -1.0};
    std::vector<double> m = propagate_mean(phi, state, 0.3, 500);
    CHECK(m.back() == Approx(0.3 / (1.0 - 0.6 + 0.2)).margin(1e-6));
  }
}

// ===========================================================================
// Quantile regression solver
// ===========================================================================

TEST_CASE("qr solver: textbook cases", "[qr]") {
  SECTION("intercept-only median is the sample median") {
    Eigen::VectorXd y(5);
    y << 1, 2, 3, 4, 5;
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(5, 1);
    QrFit fit = qr_fit_no_intercept(y, ones, 0.5);
    CHECK(fit.beta[0] == Approx(3.0).margin(1e-8));
    CHECK(fit.objective == Approx(3.0).margin(1e-8));
    CHECK(fit.status == QrStatus::optimal);
  }
  SECTION("intercept-only first quartile of {1,2,3,4}") {
    Eigen::VectorXd y(4);
    y << 1, 2, 3, 4;
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(4, 1);
    QrFit fit = qr_fit_no_intercept(y, ones, 0.25);
    CHECK(fit.objective == Approx(1.5).margin(1e-8));
  }
  SECTION("collinear points give a zero-loss line") {
    Eigen::VectorXd y(3);
    y << 1.0, 3.0, 5.0;
    Eigen::MatrixXd P(3, 1);
    P << 0.0, 1.0, 2.0;
    QrFit fit = qr_fit(y, DesignMatrix::with_intercept(P), 0.37);
    CHECK(fit.objective == Approx(0.0).margin(1e-10));
    CHECK(fit.beta[0] == Approx(1.0).margin(1e-8));
    CHECK(fit.beta[1] == Approx(2.0).margin(1e-8));
  }
  SECTION("a predictor equal to the response is found exactly") {
    Rng rng(61);
    Eigen::VectorXd y(20);
    for (int i = 0; i < 20; ++i) y[i] = rng.gaussian();
    QrFit fit = qr_fit_no_intercept(y, y, 0.7);
    CHECK(fit.beta[0] == Approx(1.0).margin(1e-8));
    CHECK(fit.objective == Approx(0.0).margin(1e-10));
  }
}

TEST_CASE("qr solver: enumeration oracle on random instances", "[qr][oracle]") {
  Rng rng(62);
  for (int inst = 0; inst < 40; ++inst) {
    int n = 6 + static_cast<int>(rng.pick_index(7));
    int p = 1 + static_cast<int>(rng.pick_index(2));
    Eigen::MatrixXd X(n, p + 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      X(i, 0) = 1.0;
      for (int j = 1; j <= p; ++j) X(i, j) = 2.0 * rng.gaussian();
      y[i] = rng.gaussian() + 0.5 * X(i, std::min(1, p));
    }
    static constexpr double taus[] = {0.1, 0.25, 0.5, 0.75, 0.9};
    double tau = taus[inst % 5];
    QrFit fit = qr_fit_no_intercept(y, X, tau);
    double oracle = enumerate_qr_objective(y, X, tau);
    REQUIRE(fit.objective == Approx(oracle).margin(1e-8));
    REQUIRE(fit.certificate_verified);
  }
}

TEST_CASE("qr solver: lagged-self design matches slope enumeration", "[qr][oracle]") {
  Rng rng(63);
  Eigen::VectorXd eps(9);
  for (int i = 0; i < 9; ++i) eps[i] = rng.gaussian();
  Eigen::VectorXd y = eps.tail(8);
  Eigen::MatrixXd X = eps.head(8);
  QrFit fit = qr_fit_no_intercept(y, X, 0.5);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 8; ++i) {
    double slope = y[i] / X(i, 0);
    Eigen::VectorXd res = y - X * Eigen::VectorXd::Constant(1, slope);
    best = std::min(best, check_loss_sum(as_span(res), 0.5));
  }
  CHECK(fit.objective == Approx(best).margin(1e-8));
}

TEST_CASE("qr solver: median fit equals independent LAD", "[qr][oracle]") {
  Rng rng(64);
  for (int inst = 0; inst < 10; ++inst) {
    int n = 40 + static_cast<int>(rng.pick_index(40));
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      X(i, 0) = 1.0;
      X(i, 1) = rng.gaussian();
      X(i, 2) = rng.uniform() * 3.0;
      y[i] = 1.0 + X(i, 1) - 2.0 * X(i, 2) + rng.gaussian();
    }
    QrFit fit = qr_fit_no_intercept(y, X, 0.5);
    CHECK(fit.objective == Approx(lad_irls_objective(y, X)).margin(2e-5));
  }
}

TEST_CASE("qr solver: counting, equivariance, vertex structure", "[qr]") {
  Rng rng(65);
  const int n = 60;
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.gaussian();
    X(i, 2) = rng.gaussian();
    y[i] = 0.3 - X(i, 1) + 0.4 * X(i, 2) + rng.gaussian();
  }
  for (double tau : {0.2, 0.5, 0.8}) {
    QrFit fit = qr_fit_no_intercept(y, X, tau);
    int neg = 0, pos = 0;
    for (int i = 0; i < n; ++i) {
      neg += fit.residuals[i] < -1e-9;
      pos += fit.residuals[i] > 1e-9;
    }
    CHECK(static_cast<double>(neg) <= tau * n + 1e-9);
    CHECK(static_cast<double>(pos) <= (1.0 - tau) * n + 1e-9);
    CHECK(fit.zero_residual_count >= X.cols());

    const double c = 2.5, a = -1.3;
    QrFit scaled = qr_fit_no_intercept((c * y).eval(), X, tau);
    CHECK(scaled.objective == Approx(c * fit.objective).margin(1e-8));
    for (int j = 0; j < 3; ++j) CHECK(scaled.beta[j] == Approx(c * fit.beta[j]).margin(1e-7));
    QrFit shifted =
        qr_fit_no_intercept((y.array() + a).matrix().eval(), X, tau);
    CHECK(shifted.objective == Approx(fit.objective).margin(1e-8));
    CHECK(shifted.beta[0] == Approx(fit.beta[0] + a).margin(1e-7));
    CHECK(shifted.beta[1] == Approx(fit.beta[1]).margin(1e-7));
  }
}

TEST_CASE("qr solver: input validation", "[qr]") {
  Eigen::VectorXd y(5);
  y << 1, 2, 3, 4, 5;
  SECTION("rank-deficient design is named") {
    Eigen::MatrixXd X(5, 2);
    X.col(0).setOnes();
    X.col(1) = 2.0 * X.col(0);
    CHECK_THROWS_WITH(qr_fit_no_intercept(y, X, 0.5),
                      Catch::Matchers::ContainsSubstring("rank"));
  }
  SECTION("more columns than rows") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Random(5, 5);
    CHECK_THROWS_AS(qr_fit_no_intercept(y, X, 0.5), std::invalid_argument);
  }
  SECTION("non-finite input") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Random(5, 2);
    Eigen::VectorXd bad = y;
    bad[2] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(qr_fit_no_intercept(bad, X, 0.5), std::invalid_argument);
  }
}

// ===========================================================================
// PCA
// ===========================================================================

TEST_CASE("pca transform: spectral structure", "[pca]") {
  Rng rng(70);
  Eigen::MatrixXd X(50, 10);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double f = rng.gaussian();
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      X(i, j) = (j < 4 ? 1.5 * f : 0.0) + rng.gaussian();
    }
  }
  PcaTransform t = fit_pca(X);
  REQUIRE(t.k_max == 10);

  SECTION("loadings are orthonormal, eigenvalues descend and sum to p") {
    Eigen::MatrixXd gram = t.loadings.transpose() * t.loadings;
    CHECK((gram - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff() < 1e-10);
    for (Eigen::Index k = 1; k < t.eigenvalues.size(); ++k) {
      CHECK(t.eigenvalues[k] <= t.eigenvalues[k - 1] + 1e-12);
    }
    CHECK(t.eigenvalues.sum() == Approx(10.0).margin(1e-8));
  }
  SECTION("projected scores have diagonal covariance equal to the eigenvalues") {
    Eigen::MatrixXd S = pca_project(t, X, t.k_max);
    Eigen::MatrixXd centered = S.rowwise() - S.colwise().mean();
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(S.rows() - 1);
    for (Eigen::Index a = 0; a < cov.rows(); ++a) {
      for (Eigen::Index b = 0; b < cov.cols(); ++b) {
        double want = a == b ? t.eigenvalues[a] : 0.0;
        CHECK(cov(a, b) == Approx(want).margin(1e-8));
      }
    }
  }
  SECTION("guards") {
    Eigen::MatrixXd constant = Eigen::MatrixXd::Ones(20, 2);
    CHECK_THROWS_WITH(fit_pca(constant), Catch::Matchers::ContainsSubstring("column"));
    CHECK_THROWS_AS(pca_project(t, X, 0), std::invalid_argument);
    CHECK_THROWS_AS(pca_project(t, X, t.k_max + 1), std::invalid_argument);
  }
}

// ===========================================================================
// Smoothing spline
// ===========================================================================

TEST_CASE("smoothing spline: df control and trace oracle", "[spline]") {
  Rng rng(80);
  std::vector<double> y(80);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = std::sin(0.15 * static_cast<double>(i)) + 0.3 * rng.gaussian();
  }
  SECTION("achieved df tracks the request and the dense trace agrees") {
    for (double df : {4.0, 9.2, 25.0}) {
      SmoothResult s = smooth_to_df(y, df);
      CHECK(s.achieved_df == Approx(df).margin(0.011));
      CHECK(dense_smoother_trace(y.size(), s.lambda) == Approx(df).margin(0.1));
    }
  }
  SECTION("df equal to n returns the input") {
    SmoothResult s = smooth_to_df(y, static_cast<double>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(s.fitted[i] == y[i]);
  }
  SECTION("df 2 is the least-squares line") {
    SmoothResult s = smooth_to_df(y, 2.0);
    double n = static_cast<double>(y.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      double x = static_cast<double>(i);
      sx += x;
      sy += y[i];
      sxx += x * x;
      sxy += x * y[i];
    }
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    double intercept = (sy - slope * sx) / n;
    for (std::size_t i = 0; i < y.size(); i += 7) {
      CHECK(s.fitted[i] == Approx(intercept + slope * static_cast<double>(i)).margin(1e-4));
    }
  }
  SECTION("guards") {
    std::vector<double> three = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(smooth_to_df(three, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(smooth_to_df(y, 1.5), std::invalid_argument);
  }
}

// ===========================================================================
// Innovation laws
// ===========================================================================

TEST_CASE("innovation estimation and centering", "[innovation]") {
  Rng rng(90);
  std::vector<double> sample(5000);
  for (double& v : sample) v = 0.3 + 1.7 * rng.gaussian();

  SECTION("gaussian moments") {
    InnovationDistribution d =
        estimate_innovation_distribution(sample, 0.5, InnovationKind::gaussian);
    CHECK(d.sample_mean == Approx(0.3).margin(0.05));
    CHECK(d.sigma_naive == Approx(1.7).margin(0.05));
    CHECK_FALSE(d.quantile_centered);
    CHECK(d.gaussian_mean == d.sample_mean);
  }
  SECTION("off-median gaussian shifts so the tau quantile is zero") {
    InnovationDistribution d =
        estimate_innovation_distribution(sample, 0.25, InnovationKind::gaussian);
    CHECK(d.quantile_centered);
    CHECK(d.gaussian_mean == Approx(-d.sigma * normal_quantile(0.25)).margin(1e-12));
    // The law's 25th percentile: mean + sigma * z_{0.25} should be zero.
    CHECK(d.gaussian_mean + d.sigma * normal_quantile(0.25) == Approx(0.0).margin(1e-12));
  }
  SECTION("asymmetric Laplace scale is the mean check loss") {
    InnovationDistribution d =
        estimate_innovation_distribution(sample, 0.3, InnovationKind::asymmetric_laplace);
    double mean_loss = 0.0;
    for (double v : sample) mean_loss += check_loss(v, 0.3);
    mean_loss /= static_cast<double>(sample.size());
    CHECK(d.laplace_scale == Approx(mean_loss).margin(1e-12));
  }
  SECTION("zero variance is rejected") {
    std::vector<double> flat(100, 0.7);
    CHECK_THROWS_AS(estimate_innovation_distribution(flat, 0.5, InnovationKind::gaussian),
                    std::invalid_argument);
  }
  SECTION("too few points are rejected") {
    std::vector<double> five = {1, 2, 3, 4, 5};
    CHECK_THROWS_AS(estimate_innovation_distribution(five, 0.5, InnovationKind::gaussian),
                    std::invalid_argument);
  }
}

TEST_CASE("innovation sampling", "[innovation]") {
  InnovationDistribution d;
  d.kind = InnovationKind::gaussian;
  d.gaussian_mean = 0.0;
  d.sigma = 1.0;

  SECTION("count zero gives an empty sequence") {
    Rng rng(91);
    CHECK(sample_innovations(d, 0, rng).empty());
  }
  SECTION("same seed, identical draws") {
    Rng a(92), b(92);
    CHECK(sample_innovations(d, 50, a) == sample_innovations(d, 50, b));
  }
  SECTION("gaussian sample moments at n = 1e5") {
    Rng rng(93);
    std::vector<double> x = sample_innovations(d, 100000, rng);
    double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    CHECK(mean == Approx(0.0).margin(0.02));
    CHECK(std::sqrt(ss / static_cast<double>(x.size() - 1)) == Approx(1.0).margin(0.02));
  }
  SECTION("empirical draws come from the stored sample") {
    InnovationDistribution e;
    e.kind = InnovationKind::empirical;
    e.values = {1.0, 2.0, 4.0};
    Rng rng(94);
    for (double v : sample_innovations(e, 200, rng)) {
      CHECK((v == 1.0 || v == 2.0 || v == 4.0));
    }
    e.values.clear();
    CHECK_THROWS_AS(sample_innovations(e, 3, rng), std::invalid_argument);
  }
  SECTION("sigma rescale preserves the centering convention") {
    InnovationDistribution g =
        [&] {
          Rng rng(95);
          std::vector<double> s(1000);
          for (double& v : s) v = rng.gaussian();
          return estimate_innovation_distribution(s, 0.1, InnovationKind::gaussian);
        }();
    InnovationDistribution scaled = apply_corrected_sigma(g, g.sigma * 1.4);
    CHECK(scaled.sigma == Approx(g.sigma * 1.4).margin(1e-12));
    CHECK(scaled.gaussian_mean + scaled.sigma * normal_quantile(0.1) == Approx(0.0).margin(1e-12));
  }
}

// ===========================================================================
// CSV and panel round trips
// ===========================================================================

TEST_CASE("synthetic panel generation basics", "[panel]") {
  SyntheticSpec spec;
  spec.calibration_length = 30;
  spec.reconstruction_length = 10;
  spec.proxies = 4;
  spec.seed = 5;

  SECTION("same seed reproduces the panel bit for bit") {
    SyntheticPanel a = generate_synthetic_panel(spec);
    SyntheticPanel b = generate_synthetic_panel(spec);
    CHECK(a.panel.proxies == b.panel.proxies);
    // Instrumental values are NaN outside the calibration span, so compare
    // cell by cell treating NaN as matching NaN.
    REQUIRE(a.panel.instrumental.size() == b.panel.instrumental.size());
    for (std::size_t i = 0; i < a.panel.instrumental.size(); ++i) {
      double u = a.panel.instrumental[i], v = b.panel.instrumental[i];
      if (std::isnan(u)) {
        CHECK(std::isnan(v));
      } else {
        CHECK(u == v);
      }
    }
    CHECK(a.truth.response == b.truth.response);
  }
  SECTION("zero noise makes the response the regression surface") {
    SyntheticSpec quiet = spec;
    quiet.noise_scale = 0.0;
    quiet.phi.clear();
    SyntheticPanel p = generate_synthetic_panel(quiet);
    for (std::size_t i = 0; i < p.truth.response.size(); ++i) {
      CHECK(p.truth.response[i] == Approx(p.truth.conditional_location[i]).margin(1e-12));
    }
  }
  SECTION("panel validates and spans line up") {
    SyntheticPanel p = generate_synthetic_panel(spec);
    CHECK_NOTHROW(p.panel.validate());
    CHECK(p.panel.calibration.length() == 30);
    CHECK(p.panel.reconstruction.length() == 10);
    CHECK(p.panel.years.size() == 40);
  }
}

TEST_CASE("panel and series files round trip", "[csv]") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "quarts_test_csv";
  fs::create_directories(dir);

  SyntheticSpec spec;
  spec.calibration_length = 25;
  spec.reconstruction_length = 12;
  spec.proxies = 3;
  spec.seed = 9;
  SyntheticPanel syn = generate_synthetic_panel(spec);

  SECTION("panel csv round trip") {
    std::string pp = (dir / "p.csv").string();
    std::string ip = (dir / "i.csv").string();
    write_panel_csv(syn.panel, pp, ip);
    LoadedPanel back = load_panel(pp, ip);
    CHECK(back.dropped_proxies.empty());
    CHECK(back.panel.years == syn.panel.years);
    CHECK((back.panel.proxies - syn.panel.proxies).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.panel.calibration.first == syn.panel.calibration.first);
    CHECK(back.panel.reconstruction.last == syn.panel.reconstruction.last);
  }
  SECTION("a proxy with a missing value in the modeled span is dropped and named") {
    std::string pp = (dir / "pm.csv").string();
    std::string ip = (dir / "im.csv").string();
    write_panel_csv(syn.panel, pp, ip);
    // Blank out proxy_2 at the fifth reconstruction year.
    std::ifstream in(pp);
    std::stringstream rebuilt;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
      if (row == 5) {
        auto first_comma = line.find(',');
        auto second = line.find(',', first_comma + 1);
        auto third = line.find(',', second + 1);
        line = line.substr(0, second + 1) + line.substr(third);
      }
      rebuilt << line << '\n';
      ++row;
    }
    in.close();
    std::ofstream(pp) << rebuilt.str();
    LoadedPanel back = load_panel(pp, ip);
    REQUIRE(back.dropped_proxies.size() == 1);
    CHECK(back.dropped_proxies[0] == "proxy_2");
    CHECK(back.panel.proxies.cols() == 2);
  }
  SECTION("malformed numeric cell names the file, row, and column") {
    std::string pp = (dir / "pb.csv").string();
    std::string ip = (dir / "ib.csv").string();
    write_panel_csv(syn.panel, pp, ip);
    std::ifstream in(pp);
    std::stringstream rebuilt;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
      if (row == 3) {
        auto last_comma = line.rfind(',');
        line = line.substr(0, last_comma + 1) + "oops";
      }
      rebuilt << line << '\n';
      ++row;
    }
    in.close();
    std::ofstream(pp) << rebuilt.str();
    try {
      (void)load_panel(pp, ip);
      FAIL("expected a parse error");
    } catch (const std::exception& e) {
      std::string msg = e.what();
      CHECK(msg.find("row 4") != std::string::npos);
      CHECK(msg.find("proxy_3") != std::string::npos);
    }
  }
  SECTION("reconstruction csv schema and round trip") {
    ReconstructionResult r;
    for (int i = 0; i < 6; ++i) {
      r.time.push_back(1900 + i);
      r.point.push_back(0.1 * i - 0.3);
      r.lower.push_back(r.point.back() - 1.0 / 3.0);
      r.upper.push_back(r.point.back() + 1e-17);
      r.in_sample.push_back(i >= 3);
      r.smoothed_point.push_back(r.point.back() * 0.9);
      r.smoothed_lower.push_back(r.lower.back() * 0.9);
      r.smoothed_upper.push_back(r.upper.back() * 0.9);
    }
    std::string path = (dir / "series.csv").string();
    write_reconstruction_csv(r, path);
    std::ifstream check_header(path);
    std::string header;
    std::getline(check_header, header);
    CHECK(header == "time,point,lower,upper,in_sample,smoothed_point,smoothed_lower,"
                    "smoothed_upper");
    ReconstructionResult back = load_reconstruction_csv(path);
    REQUIRE(back.time == r.time);
    for (std::size_t i = 0; i < r.point.size(); ++i) {
      CHECK(back.point[i] == r.point[i]);
      CHECK(back.lower[i] == r.lower[i]);
      CHECK(back.upper[i] == r.upper[i]);
      CHECK(back.in_sample[i] == r.in_sample[i]);
      CHECK(back.smoothed_point[i] == r.smoothed_point[i]);
    }
  }
  SECTION("metadata json round trip") {
    RunMetadata m;
    m.tool_version = "x";
    m.argv_effective = {"reconstruct", "--tau", "0.5"};
    m.fitter = "quarts";
    m.tau = 0.30000000000000004;
    m.q = 2;
    m.k = 7;
    m.q_auto = true;
    m.sigma_corrected = 1.2345678901234567;
    m.seed = 987654321;
    m.proxy_ids = {"a", "b"};
    m.dropped_proxies = {"c"};
    m.caveat = "model order fixed by hand (q=2), not selected from the data";
    std::string path = (dir / "meta.json").string();
    write_metadata_json(m, path);
    RunMetadata back = load_metadata_json(path);
    CHECK(back.tau == m.tau);
    CHECK(back.sigma_corrected == m.sigma_corrected);
    CHECK(back.q == 2);
    CHECK(back.argv_effective == m.argv_effective);
    CHECK(back.proxy_ids == m.proxy_ids);
    CHECK(back.caveat == m.caveat);
  }
  SECTION("format_double survives strtod round trips") {
    Rng rng(99);
    for (int i = 0; i < 500; ++i) {
      double v = std::exp(20.0 * (rng.uniform() - 0.5)) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
      CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
    }
  }
  fs::remove_all(dir);
}
