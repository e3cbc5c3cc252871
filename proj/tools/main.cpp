// Command-line surface for the quantile-regression reconstruction pipeline:
// fit, reconstruct, quantiles, diagnose, simulate.
//
// Exit codes: 0 success, 1 runtime or model error, 2 usage error.
// Every command writes a metadata.json sidecar whose argv_effective array
// re-runs the command with identical results (prepend the binary path).
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "quarts/quarts.hpp"

namespace {

using namespace quarts;

std::string fmt(double v) { return format_double(v); }

YearSpan parse_span(const std::string& text) {
  auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw CLI::ValidationError("span", "expected FIRST:LAST, got '" + text + "'");
  }
  YearSpan span;
  try {
    span.first = std::stol(text.substr(0, colon));
    span.last = std::stol(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw CLI::ValidationError("span", "expected FIRST:LAST, got '" + text + "'");
  }
  if (span.last < span.first) {
    throw CLI::ValidationError("span", "span runs backwards: '" + text + "'");
  }
  return span;
}

std::string span_text(const YearSpan& s) {
  return std::to_string(s.first) + ":" + std::to_string(s.last);
}

/// CSV-quotes a free-text field (error messages may contain commas).
std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    out += c;
    if (c == '"') out += '"';
  }
  out += '"';
  return out;
}

// ---------------------------------------------------------------------------
// Option bundles shared across subcommands.

struct PanelOpts {
  std::string proxies_path;
  std::string instrumental_path;
  std::string calibration;     ///< FIRST:LAST, empty = infer from overlap
  std::string reconstruction;  ///< FIRST:LAST, empty = infer from leftover years
};

struct ModelOpts {
  double tau = 0.5;
  int q = -1;
  int k = -1;
  bool auto_lag = false;
  bool auto_k = false;
  std::string fitter = "quarts";
  std::string innovation = "gaussian";
  std::string centering = "auto";
  int max_q = 5;
  int folds = 10;
  int absorb = 4;
  int k_max = 0;
};

struct RunOpts {
  std::string out_dir = "quarts_out";
  std::uint64_t seed = 1;
  unsigned threads = 0;
  int bootstrap = 500;
  double alpha = 0.05;
  std::size_t burn_in = 500;
  double max_failure = 0.05;
};

struct ReconOpts {
  std::string band = "prediction";
  double smooth_df = 0.0;
  bool plot_data = false;
};

void add_panel_options(CLI::App* sub, PanelOpts& po) {
  sub->add_option("--proxies", po.proxies_path, "Proxy CSV: year column, one column per proxy")
      ->required();
  sub->add_option("--instrumental", po.instrumental_path, "Instrumental CSV: year,value")
      ->required();
  sub->add_option("--calibration", po.calibration,
                  "Calibration span FIRST:LAST (default: instrumental/proxy overlap)");
  sub->add_option("--reconstruction", po.reconstruction,
                  "Reconstruction span FIRST:LAST (default: proxy years outside calibration)");
}

void add_model_options(CLI::App* sub, ModelOpts& mo) {
  sub->add_option("--tau", mo.tau, "Quantile level")
      ->check(CLI::Range(0.001, 0.999))
      ->capture_default_str();
  CLI::Option* q = sub->add_option("--q", mo.q, "Residual AR order (omit to search)")
                       ->check(CLI::Range(0, 1000));
  CLI::Option* al = sub->add_flag("--auto-lag", mo.auto_lag, "Search the residual AR order");
  q->excludes(al);
  CLI::Option* k = sub->add_option("--k", mo.k,
                                   "Number of leading components (0 = raw proxies, omit to "
                                   "cross-validate)")
                       ->check(CLI::Range(0, 100000));
  CLI::Option* ak = sub->add_flag("--auto-k", mo.auto_k, "Cross-validate the component count");
  k->excludes(ak);
  sub->add_option("--fitter", mo.fitter, "Fitting method")
      ->check(CLI::IsMember({"quarts", "gls"}))
      ->capture_default_str();
  sub->add_option("--innovation", mo.innovation, "Innovation law for simulation-based bands")
      ->check(CLI::IsMember({"gaussian", "empirical", "asymmetric_laplace"}))
      ->capture_default_str();
  sub->add_option("--centering", mo.centering, "When to recenter the law at the target quantile")
      ->check(CLI::IsMember({"auto", "always", "never"}))
      ->capture_default_str();
  sub->add_option("--max-q", mo.max_q, "Largest AR order the search may accept")
      ->check(CLI::Range(0, 1000))
      ->capture_default_str();
  sub->add_option("--folds", mo.folds, "Cross-validation folds")
      ->check(CLI::Range(2, 1000))
      ->capture_default_str();
  sub->add_option("--absorb", mo.absorb, "Context rows absorbed after each holdout block")
      ->check(CLI::Range(0, 1000))
      ->capture_default_str();
  sub->add_option("--k-max", mo.k_max, "Largest candidate component count (0 = automatic)")
      ->check(CLI::Range(0, 100000))
      ->capture_default_str();
}

void add_run_options(CLI::App* sub, RunOpts& ro, bool with_bootstrap) {
  sub->add_option("--out", ro.out_dir, "Output directory")->capture_default_str();
  sub->add_option("--seed", ro.seed, "Master RNG seed")->capture_default_str();
  sub->add_option("--threads", ro.threads, "Worker thread cap (0 = hardware)")
      ->capture_default_str();
  if (with_bootstrap) {
    sub->add_option("--bootstrap", ro.bootstrap, "Bootstrap replications")
        ->check(CLI::Range(2, 1000000))
        ->capture_default_str();
    sub->add_option("--alpha", ro.alpha, "Band/interval miss probability")
        ->check(CLI::Range(0.0001, 0.5))
        ->capture_default_str();
    sub->add_option("--burn-in", ro.burn_in, "Simulated pre-sample steps per replication")
        ->capture_default_str();
    sub->add_option("--max-failure-fraction", ro.max_failure,
                    "Largest tolerated fraction of thrown refits")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
  }
}

void add_recon_options(CLI::App* sub, ReconOpts& xo) {
  sub->add_option("--band", xo.band, "Band target: prediction or quantile")
      ->check(CLI::IsMember({"prediction", "quantile"}))
      ->capture_default_str();
  sub->add_option("--smooth-df", xo.smooth_df,
                  "Effective df of the smoothing spline (0 = 0.115 per year)")
      ->check(CLI::Range(0.0, 1e9))
      ->capture_default_str();
  sub->add_flag("--plot-data", xo.plot_data, "Also write plot_data.csv in long format");
}

// ---------------------------------------------------------------------------
// Canonical re-run argument lists. Auto selections are echoed as the auto
// flags (not the resolved values) so the sidecar replays the whole search.

void push_panel_args(std::vector<std::string>& a, const PanelOpts& po) {
  a.insert(a.end(), {"--proxies", po.proxies_path, "--instrumental", po.instrumental_path});
  if (!po.calibration.empty()) a.insert(a.end(), {"--calibration", po.calibration});
  if (!po.reconstruction.empty()) a.insert(a.end(), {"--reconstruction", po.reconstruction});
}

void push_model_args(std::vector<std::string>& a, const ModelOpts& mo) {
  a.insert(a.end(), {"--tau", fmt(mo.tau), "--fitter", mo.fitter});
  if (mo.q >= 0) {
    a.insert(a.end(), {"--q", std::to_string(mo.q)});
  } else {
    a.push_back("--auto-lag");
  }
  if (mo.k >= 0) {
    a.insert(a.end(), {"--k", std::to_string(mo.k)});
  } else {
    a.push_back("--auto-k");
  }
  a.insert(a.end(), {"--innovation", mo.innovation, "--centering", mo.centering});
  a.insert(a.end(), {"--max-q", std::to_string(mo.max_q), "--folds", std::to_string(mo.folds),
                     "--absorb", std::to_string(mo.absorb), "--k-max", std::to_string(mo.k_max)});
}

void push_run_args(std::vector<std::string>& a, const RunOpts& ro, bool with_bootstrap) {
  a.insert(a.end(), {"--out", ro.out_dir, "--seed", std::to_string(ro.seed), "--threads",
                     std::to_string(ro.threads)});
  if (with_bootstrap) {
    a.insert(a.end(),
             {"--bootstrap", std::to_string(ro.bootstrap), "--alpha", fmt(ro.alpha), "--burn-in",
              std::to_string(ro.burn_in), "--max-failure-fraction", fmt(ro.max_failure)});
  }
}

void push_recon_args(std::vector<std::string>& a, const ReconOpts& xo) {
  a.insert(a.end(), {"--band", xo.band, "--smooth-df", fmt(xo.smooth_df)});
  if (xo.plot_data) a.push_back("--plot-data");
}

// ---------------------------------------------------------------------------
// Shared assembly steps.

LoadedPanel load_from(const PanelOpts& po) {
  LoadConfig lc;
  if (!po.calibration.empty()) lc.calibration = parse_span(po.calibration);
  if (!po.reconstruction.empty()) lc.reconstruction = parse_span(po.reconstruction);
  return load_panel(po.proxies_path, po.instrumental_path, lc);
}

/// The panel restricted to its calibration span: coefficient tables and
/// diagnostics do not involve the horizon.
ProxyPanel calibration_only(const ProxyPanel& in) {
  ProxyPanel out;
  const long n = in.calibration.length();
  out.years.resize(static_cast<std::size_t>(n));
  out.proxies.resize(n, in.proxies.cols());
  out.instrumental.resize(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    long year = in.calibration.first + i;
    Eigen::Index r = in.row_of(year);
    out.years[static_cast<std::size_t>(i)] = year;
    out.proxies.row(i) = in.proxies.row(r);
    out.instrumental[static_cast<std::size_t>(i)] = in.instrumental[static_cast<std::size_t>(r)];
  }
  out.proxy_ids = in.proxy_ids;
  out.calibration = in.calibration;
  out.has_reconstruction = false;
  return out;
}

ReconstructConfig build_config(const ModelOpts& mo, const RunOpts& ro, const ReconOpts* xo) {
  ReconstructConfig cfg;
  cfg.tau = mo.tau;
  cfg.fitter = parse_fitter(mo.fitter);
  cfg.q = mo.auto_lag ? -1 : mo.q;
  cfg.k = mo.auto_k ? -1 : mo.k;
  cfg.innovation = parse_innovation(mo.innovation);
  cfg.centering = parse_centering(mo.centering);
  cfg.bootstrap_replications = ro.bootstrap;
  cfg.bootstrap_burn_in = ro.burn_in;
  cfg.max_failure_fraction = ro.max_failure;
  cfg.alpha = ro.alpha;
  cfg.seed = ro.seed;
  cfg.threads = ro.threads;
  cfg.lag.max_q = mo.max_q;
  cfg.cv.folds = mo.folds;
  cfg.cv.absorb = mo.absorb;
  cfg.cv.k_max = mo.k_max;
  if (xo != nullptr) {
    cfg.band_target =
        xo->band == "quantile" ? BandTarget::conditional_quantile : BandTarget::prediction;
    cfg.smooth_df = xo->smooth_df;
  }
  return cfg;
}

void report_dropped(const LoadedPanel& lp) {
  if (lp.dropped_proxies.empty()) return;
  std::fprintf(stderr, "note: dropped %zu of %zu proxies with missing values in the modeled span\n",
               lp.dropped_proxies.size(),
               lp.dropped_proxies.size() + static_cast<std::size_t>(lp.panel.proxies.cols()));
}

// ---------------------------------------------------------------------------
// Report writers.

void write_coefficients_csv(const CoefficientInference& ci, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "name,estimate,boot_sd,ci_lower,ci_upper,p_value\n";
  for (std::size_t i = 0; i < ci.names.size(); ++i) {
    out << ci.names[i] << ',' << fmt(ci.estimate[i]) << ',' << fmt(ci.boot_sd[i]) << ','
        << fmt(ci.ci_lower[i]) << ',' << fmt(ci.ci_upper[i]) << ',' << fmt(ci.p_value[i]) << '\n';
  }
}

/// ACF, PACF, per-lag Ljung-Box, and normal Q-Q data for one innovation sample.
void write_diagnostics_files(const DiagnosticsReport& report, const std::string& dir) {
  {
    std::ofstream out(dir + "/acf.csv");
    out << "lag,value\n";
    for (std::size_t l = 0; l < report.acf.size(); ++l) {
      out << l << ',' << fmt(report.acf[l]) << '\n';
    }
  }
  {
    std::ofstream out(dir + "/pacf.csv");
    out << "lag,value\n";
    for (std::size_t l = 0; l < report.pacf.size(); ++l) {
      out << (l + 1) << ',' << fmt(report.pacf[l]) << '\n';
    }
  }
  {
    std::ofstream out(dir + "/ljung_box.csv");
    out << "lag,statistic,p_value\n";
    std::span<const double> sample(report.sample.data(), report.sample.size());
    for (std::size_t l = 1; l < report.acf.size(); ++l) {
      LjungBoxResult lb = ljung_box(sample, l);
      out << l << ',' << fmt(lb.statistic) << ',' << fmt(lb.p_value) << '\n';
    }
  }
  {
    std::vector<double> sorted = report.sample;
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    double mean = 0.0;
    for (double v : sorted) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : sorted) ss += (v - mean) * (v - mean);
    double sd = std::sqrt(ss / (n - 1.0));
    std::ofstream out(dir + "/qq.csv");
    out << "theoretical,sample\n";
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      double u = (static_cast<double>(i) + 0.5) / n;
      out << fmt(mean + sd * normal_quantile(u)) << ',' << fmt(sorted[i]) << '\n';
    }
  }
}

void write_plot_data(const ReconstructionResult& series, const ProxyPanel& panel,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "series,time,value\n";
  auto emit = [&](const char* name, const std::vector<double>& values) {
    for (std::size_t i = 0; i < series.time.size(); ++i) {
      out << name << ',' << series.time[i] << ',' << fmt(values[i]) << '\n';
    }
  };
  emit("point", series.point);
  emit("lower", series.lower);
  emit("upper", series.upper);
  emit("smoothed_point", series.smoothed_point);
  emit("smoothed_lower", series.smoothed_lower);
  emit("smoothed_upper", series.smoothed_upper);
  for (long year = panel.calibration.first; year <= panel.calibration.last; ++year) {
    double v = panel.instrumental[static_cast<std::size_t>(panel.row_of(year))];
    out << "instrumental," << year << ',' << fmt(v) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Subcommand bodies.

void run_fit(const PanelOpts& po, const ModelOpts& mo, const RunOpts& ro) {
  LoadedPanel lp = load_from(po);
  report_dropped(lp);
  ProxyPanel panel = calibration_only(lp.panel);
  ReconstructConfig cfg = build_config(mo, ro, nullptr);
  ReconstructOutput out = reconstruct(panel, cfg);

  BootstrapConfig bc;
  bc.replications = ro.bootstrap;
  bc.alpha = ro.alpha;
  bc.seed = ro.seed;
  bc.threads = ro.threads;
  bc.burn_in = ro.burn_in;
  bc.max_failure_fraction = ro.max_failure;
  bc.fit = cfg.fit;
  DesignMatrix design(out.design_calibration);
  BootstrapEnsemble ens = cfg.fitter == FitterKind::quarts
                              ? bootstrap_coefficients(out.model, out.innovation_law, design, bc)
                              : bootstrap_coefficients(out.gls_model, out.innovation_law, design, bc);

  std::filesystem::create_directories(ro.out_dir);
  write_coefficients_csv(coefficient_pvalues(ens, ro.alpha), ro.out_dir + "/coefficients.csv");
  if (out.pca) {
    write_coefficients_csv(coefficient_pvalues_proxy(ens, *out.pca, panel.proxy_ids, ro.alpha),
                           ro.out_dir + "/proxy_coefficients.csv");
  }
  write_diagnostics_files(out.innovation_diagnostics, ro.out_dir);

  RunMetadata meta = out.metadata;
  meta.argv_effective = {"fit"};
  push_panel_args(meta.argv_effective, po);
  push_model_args(meta.argv_effective, mo);
  push_run_args(meta.argv_effective, ro, true);
  meta.bootstrap_failures = static_cast<int>(ens.failed_indices.size());
  int flagged = 0;
  for (const BootstrapReplication& r : ens.replications) flagged += r.converged ? 0 : 1;
  meta.bootstrap_nonconverged = flagged;
  meta.dropped_proxies = lp.dropped_proxies;
  write_metadata_json(meta, ro.out_dir + "/metadata.json");
  std::printf("fit: q=%d k=%d retained=%zu/%d wrote %s\n", out.q, out.k, ens.replications.size(),
              ro.bootstrap, ro.out_dir.c_str());
}

void run_reconstruct(const PanelOpts& po, const ModelOpts& mo, const RunOpts& ro,
                     const ReconOpts& xo) {
  LoadedPanel lp = load_from(po);
  report_dropped(lp);
  ReconstructConfig cfg = build_config(mo, ro, &xo);
  ReconstructOutput out = reconstruct(lp.panel, cfg);

  std::filesystem::create_directories(ro.out_dir);
  write_reconstruction_csv(out.series, ro.out_dir + "/reconstruction.csv");
  if (xo.plot_data) write_plot_data(out.series, lp.panel, ro.out_dir + "/plot_data.csv");

  RunMetadata meta = out.metadata;
  meta.argv_effective = {"reconstruct"};
  push_panel_args(meta.argv_effective, po);
  push_model_args(meta.argv_effective, mo);
  push_run_args(meta.argv_effective, ro, true);
  push_recon_args(meta.argv_effective, xo);
  meta.dropped_proxies = lp.dropped_proxies;
  write_metadata_json(meta, ro.out_dir + "/metadata.json");
  std::printf("reconstruct: q=%d k=%d years %ld..%ld wrote %s\n", out.q, out.k,
              out.series.time.front(), out.series.time.back(), ro.out_dir.c_str());
}

void run_quantiles(const PanelOpts& po, const ModelOpts& mo, const RunOpts& ro,
                   const ReconOpts& xo, const std::vector<double>& taus) {
  LoadedPanel lp = load_from(po);
  report_dropped(lp);
  ReconstructConfig cfg = build_config(mo, ro, &xo);
  QuantileFamily family = fit_quantile_family(lp.panel, taus, cfg);

  std::filesystem::create_directories(ro.out_dir);
  std::ofstream fam(ro.out_dir + "/family.csv");
  fam << "tau,q,k,sigma_naive,sigma_corrected,status,detail\n";
  for (const QuantileFamilyEntry& entry : family.fits) {
    char label[32];
    std::snprintf(label, sizeof label, "%g", entry.tau);
    std::string file = "reconstruction_tau" + std::string(label) + ".csv";
    write_reconstruction_csv(entry.output.series, ro.out_dir + "/" + file);
    fam << fmt(entry.tau) << ',' << entry.output.q << ',' << entry.output.k << ','
        << fmt(entry.output.metadata.sigma_naive) << ','
        << fmt(entry.output.metadata.sigma_corrected) << ",ok," << csv_quote(file) << '\n';
  }
  for (const auto& [tau, message] : family.failures) {
    fam << fmt(tau) << ",,,,,failed," << csv_quote(message) << '\n';
  }
  fam.close();

  {
    std::ofstream out(ro.out_dir + "/crossing.csv");
    out << "time\n";
    if (!family.fits.empty()) {
      const auto& time = family.fits.front().output.series.time;
      for (int step : family.crossing_steps) out << time[static_cast<std::size_t>(step)] << '\n';
    }
  }

  std::vector<std::string> args = {"quantiles"};
  push_panel_args(args, po);
  std::string tau_list;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (i > 0) tau_list += ',';
    tau_list += fmt(taus[i]);
  }
  args.insert(args.end(), {"--taus", tau_list});
  push_model_args(args, mo);
  push_run_args(args, ro, true);
  push_recon_args(args, xo);
  nlohmann::json meta = {{"tool_version", std::string(version)},
                         {"argv_effective", args},
                         {"taus", taus},
                         {"crossing_fraction", family.crossing_fraction},
                         {"failures", family.failures.size()},
                         {"dropped_proxies", lp.dropped_proxies}};
  std::ofstream out(ro.out_dir + "/metadata.json");
  out << meta.dump(2) << '\n';
  std::printf("quantiles: %zu fits, %zu failures, crossing fraction %.4f, wrote %s\n",
              family.fits.size(), family.failures.size(), family.crossing_fraction,
              ro.out_dir.c_str());
}

void run_diagnose(const PanelOpts& po, const ModelOpts& mo, const RunOpts& ro) {
  LoadedPanel lp = load_from(po);
  report_dropped(lp);
  ProxyPanel panel = calibration_only(lp.panel);
  ReconstructConfig cfg = build_config(mo, ro, nullptr);
  ReconstructOutput out = reconstruct(panel, cfg);

  std::filesystem::create_directories(ro.out_dir);
  write_diagnostics_files(out.innovation_diagnostics, ro.out_dir);

  RunMetadata meta = out.metadata;
  meta.argv_effective = {"diagnose"};
  push_panel_args(meta.argv_effective, po);
  push_model_args(meta.argv_effective, mo);
  push_run_args(meta.argv_effective, ro, false);
  meta.dropped_proxies = lp.dropped_proxies;
  write_metadata_json(meta, ro.out_dir + "/metadata.json");
  const DiagnosticsReport& d = out.innovation_diagnostics;
  std::printf("diagnose: q=%d k=%d LB p=%.4f AD p=%.4f ar_detected=%d wrote %s\n", out.q, out.k,
              d.ljung_box.p_value, d.anderson_darling.p_value, d.ar_behavior_detected ? 1 : 0,
              ro.out_dir.c_str());
}

struct SimulateOpts {
  SyntheticSpec spec;
  std::vector<double> beta;  ///< optional; empty keeps the generated slopes
  std::string noise = "gaussian";
  std::string out_dir = "quarts_out";
  bool calibration_first = false;
};

void run_simulate(SimulateOpts& so) {
  so.spec.noise = [&] {
    if (so.noise == "gaussian") return NoiseKind::gaussian;
    if (so.noise == "laplace") return NoiseKind::laplace;
    if (so.noise == "asymmetric_laplace") return NoiseKind::asymmetric_laplace;
    return NoiseKind::student_t;
  }();
  if (so.calibration_first) so.spec.calibration_last = false;
  if (!so.beta.empty()) {
    so.spec.beta = Eigen::Map<const Eigen::VectorXd>(so.beta.data(),
                                                     static_cast<Eigen::Index>(so.beta.size()));
  }
  SyntheticPanel syn = generate_synthetic_panel(so.spec);

  std::filesystem::create_directories(so.out_dir);
  write_panel_csv(syn.panel, so.out_dir + "/proxies.csv", so.out_dir + "/instrumental.csv");
  write_truth_csv(syn.truth, syn.panel.years, so.out_dir + "/truth.csv");

  std::vector<std::string> args = {"simulate",
                                   "--n",
                                   std::to_string(so.spec.calibration_length),
                                   "--m",
                                   std::to_string(so.spec.reconstruction_length),
                                   "--p",
                                   std::to_string(so.spec.proxies)};
  std::string phi_list;
  for (std::size_t i = 0; i < so.spec.phi.size(); ++i) {
    if (i > 0) phi_list += ',';
    phi_list += fmt(so.spec.phi[i]);
  }
  if (!phi_list.empty()) args.insert(args.end(), {"--phi", phi_list});
  if (!so.beta.empty()) {
    std::string beta_list;
    for (std::size_t i = 0; i < so.beta.size(); ++i) {
      if (i > 0) beta_list += ',';
      beta_list += fmt(so.beta[i]);
    }
    args.insert(args.end(), {"--beta", beta_list});
  }
  args.insert(args.end(),
              {"--noise", so.noise, "--noise-scale", fmt(so.spec.noise_scale), "--noise-tau",
               fmt(so.spec.noise_tau), "--t-dof", std::to_string(so.spec.t_dof), "--factors",
               std::to_string(so.spec.latent_factors), "--proxy-noise", fmt(so.spec.proxy_noise),
               "--first-year", std::to_string(so.spec.first_year), "--seed",
               std::to_string(so.spec.seed)});
  if (so.calibration_first) args.push_back("--calibration-first");
  args.insert(args.end(), {"--out", so.out_dir});

  nlohmann::json truth_beta = std::vector<double>(
      syn.truth.beta.data(), syn.truth.beta.data() + syn.truth.beta.size());
  nlohmann::json meta = {{"tool_version", std::string(version)},
                         {"argv_effective", args},
                         {"calibration", span_text(syn.panel.calibration)},
                         {"reconstruction", span_text(syn.panel.reconstruction)},
                         {"beta", truth_beta},
                         {"phi", syn.truth.phi},
                         {"innovation_sd", syn.truth.innovation_sd},
                         {"seed", so.spec.seed}};
  std::ofstream out(so.out_dir + "/metadata.json");
  out << meta.dump(2) << '\n';
  std::printf("simulate: %d+%d years, %d proxies, wrote %s\n", so.spec.calibration_length,
              so.spec.reconstruction_length, so.spec.proxies, so.out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantile regression with autoregressive residuals: fitting, reconstruction,"
               " diagnostics, and synthetic data"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(quarts::version));
  app.set_config("--config", "",
                 "INI file with option defaults in a [subcommand] section; flags override it");

  PanelOpts po_fit, po_rec, po_quant, po_diag;
  ModelOpts mo_fit, mo_rec, mo_quant, mo_diag;
  RunOpts ro_fit, ro_rec, ro_quant, ro_diag;
  ReconOpts xo_rec, xo_quant;
  std::vector<double> taus = {0.1, 0.25, 0.5, 0.75, 0.9};
  SimulateOpts so;

  CLI::App* fit = app.add_subcommand("fit", "Fit the model and write coefficient tables");
  add_panel_options(fit, po_fit);
  add_model_options(fit, mo_fit);
  add_run_options(fit, ro_fit, true);
  fit->callback([&] { run_fit(po_fit, mo_fit, ro_fit); });

  CLI::App* rec = app.add_subcommand("reconstruct", "Reconstruct the response with bands");
  add_panel_options(rec, po_rec);
  add_model_options(rec, mo_rec);
  add_run_options(rec, ro_rec, true);
  add_recon_options(rec, xo_rec);
  rec->callback([&] { run_reconstruct(po_rec, mo_rec, ro_rec, xo_rec); });

  CLI::App* quant = app.add_subcommand("quantiles", "Reconstruct a family of quantile levels");
  add_panel_options(quant, po_quant);
  quant->add_option("--taus", taus, "Quantile levels")
      ->delimiter(',')
      ->check(CLI::Range(0.001, 0.999))
      ->capture_default_str();
  add_model_options(quant, mo_quant);
  add_run_options(quant, ro_quant, true);
  add_recon_options(quant, xo_quant);
  quant->callback([&] { run_quantiles(po_quant, mo_quant, ro_quant, xo_quant, taus); });

  CLI::App* diag = app.add_subcommand("diagnose", "Write ACF/PACF/Ljung-Box/Q-Q data");
  add_panel_options(diag, po_diag);
  add_model_options(diag, mo_diag);
  add_run_options(diag, ro_diag, false);
  diag->callback([&] { run_diagnose(po_diag, mo_diag, ro_diag); });

  CLI::App* sim = app.add_subcommand("simulate", "Generate a synthetic panel with known truth");
  sim->add_option("--n", so.spec.calibration_length, "Calibration years")
      ->check(CLI::Range(4, 10000000))
      ->capture_default_str();
  sim->add_option("--m", so.spec.reconstruction_length, "Reconstruction years")
      ->check(CLI::Range(0, 10000000))
      ->capture_default_str();
  sim->add_option("--p", so.spec.proxies, "Proxy count")
      ->check(CLI::Range(1, 100000))
      ->capture_default_str();
  sim->add_option("--beta", so.beta, "Generating coefficients, intercept first")->delimiter(',');
  sim->add_option("--phi", so.spec.phi, "AR coefficients of the error process")->delimiter(',');
  sim->add_option("--noise", so.noise, "Innovation law")
      ->check(CLI::IsMember({"gaussian", "laplace", "asymmetric_laplace", "student_t"}))
      ->capture_default_str();
  sim->add_option("--noise-scale", so.spec.noise_scale, "Innovation scale parameter")
      ->capture_default_str();
  sim->add_option("--noise-tau", so.spec.noise_tau, "Asymmetry of the asymmetric Laplace law")
      ->check(CLI::Range(0.001, 0.999))
      ->capture_default_str();
  sim->add_option("--t-dof", so.spec.t_dof, "Degrees of freedom of the Student-t law")
      ->check(CLI::Range(3, 1000))
      ->capture_default_str();
  sim->add_option("--factors", so.spec.latent_factors, "Latent factors (0 = independent proxies)")
      ->check(CLI::Range(0, 100000))
      ->capture_default_str();
  sim->add_option("--proxy-noise", so.spec.proxy_noise, "Idiosyncratic proxy noise sd")
      ->capture_default_str();
  sim->add_option("--first-year", so.spec.first_year, "First calendar year")
      ->capture_default_str();
  sim->add_flag("--calibration-first", so.calibration_first,
                "Put the calibration span before the reconstruction span");
  sim->add_option("--seed", so.spec.seed, "Master RNG seed")->capture_default_str();
  sim->add_option("--out", so.out_dir, "Output directory")->capture_default_str();
  sim->callback([&] { run_simulate(so); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
