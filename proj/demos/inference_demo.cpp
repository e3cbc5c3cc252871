// Median regression with AR(1) errors on simulated data: automatic lag
// determination, quantile vs least-squares coefficients, a bootstrap
// significance table, and a certified nonconvexity witness for the joint
// objective.
#include <cstdio>

#include "quarts/quarts.hpp"

int main() {
  using namespace quarts;

  // y_i = 1 + 0.8 x1 - 0.5 x2 + e_i with e_i = 0.6 e_{i-1} + Laplace shock.
  const int n = 400;
  Rng rng(3);
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  double e = 0.0;
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.gaussian();
    X(i, 2) = rng.gaussian();
    e = 0.6 * e + rng.asymmetric_laplace(0.5, 0.15);
    y[i] = 1.0 + 0.8 * X(i, 1) - 0.5 * X(i, 2) + e;
  }
  DesignMatrix design(X);

  LagSelection lag = rarld(y, design, 0.5, FitterKind::quarts, {});
  std::printf("lag determination: q=%d after %zu candidate orders\n", lag.q,
              lag.diagnostics.size());
  for (std::size_t j = 0; j < lag.diagnostics.size(); ++j) {
    const DiagnosticsReport& d = lag.diagnostics[j];
    std::printf("  order %zu: Ljung-Box p=%.4f, ar_detected=%d\n", j, d.ljung_box.p_value,
                d.ar_behavior_detected ? 1 : 0);
  }

  QuartsModel model = quarts_fit(y, design, lag.q, 0.5);
  GlsModel gls = gls_fit(y, design, lag.q);
  std::printf("\n%12s %10s %10s\n", "coefficient", "median", "gls");
  const char* names[] = {"intercept", "x1", "x2"};
  for (int j = 0; j < 3; ++j) {
    std::printf("%12s %10.4f %10.4f\n", names[j], model.beta[j], gls.beta[j]);
  }
  std::printf("%12s %10.4f %10.4f   (true 0.6)\n", "phi1", model.phi.phi[0], gls.phi.phi[0]);

  InnovationDistribution law = estimate_innovation_distribution(
      std::span<const double>(model.innovations.data(),
                              static_cast<std::size_t>(model.innovations.size())),
      model.tau, InnovationKind::gaussian);
  BootstrapConfig bc;
  bc.replications = 300;
  bc.seed = 17;
  BootstrapEnsemble ens = bootstrap_coefficients(model, law, design, bc);
  CoefficientInference ci = coefficient_pvalues(ens, 0.05);
  std::printf("\n%12s %10s %10s %22s %8s\n", "name", "estimate", "boot sd", "95% interval", "p");
  for (std::size_t i = 0; i < ci.names.size(); ++i) {
    std::printf("%12s %10.4f %10.4f   [%8.4f, %8.4f] %8.4f\n", ci.names[i].c_str(),
                ci.estimate[i], ci.boot_sd[i], ci.ci_lower[i], ci.ci_upper[i], ci.p_value[i]);
  }

  // The joint objective in (beta, phi) is provably nonconvex; exhibit a
  // certified midpoint violation on this very dataset.
  NonconvexityWitness w = find_nonconvexity_witness(y, design, lag.q, 0.5);
  std::printf("\nnonconvexity witness after %d attempts: f(a)=%.4f f(b)=%.4f f(mid)=%.4f\n",
              w.attempts, w.f_a, w.f_b, w.f_mid);
  std::printf("midpoint exceeds the chord by %.3e\n", w.margin);
  return 0;
}
