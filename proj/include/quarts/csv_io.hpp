#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "quarts/panel.hpp"
#include "quarts/reconstruct.hpp"

namespace quarts {

/// Formats a double with enough digits to round-trip bit-exactly.
[[nodiscard]] inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b])) != 0) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])) != 0) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) lines.push_back(line);
  }
  return lines;
}

[[nodiscard]] inline bool is_missing_cell(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" || cell == "nan";
}

[[nodiscard]] inline double parse_double_cell(const std::string& cell, const std::string& where) {
  std::size_t consumed = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &consumed);
  } catch (const std::exception&) {
    throw std::runtime_error(where + ": cannot parse '" + cell + "' as a number");
  }
  if (consumed != cell.size()) {
    throw std::runtime_error(where + ": cannot parse '" + cell + "' as a number");
  }
  return v;
}

[[nodiscard]] inline long parse_year_cell(const std::string& cell, const std::string& where) {
  std::size_t consumed = 0;
  long v = 0;
  try {
    v = std::stol(cell, &consumed);
  } catch (const std::exception&) {
    throw std::runtime_error(where + ": cannot parse '" + cell + "' as a year");
  }
  if (consumed != cell.size()) {
    throw std::runtime_error(where + ": cannot parse '" + cell + "' as a year");
  }
  return v;
}

}  // namespace detail

/// Optional explicit spans for the loader; anything omitted is inferred.
struct LoadConfig {
  std::optional<YearSpan> calibration;
  std::optional<YearSpan> reconstruction;
};

/// A loaded panel plus the proxies that had to be discarded.
struct LoadedPanel {
  ProxyPanel panel;
  std::vector<std::string> dropped_proxies;
};

/**
 * @brief Loads a proxy matrix and an instrumental series from two CSV files.
 *
 * The proxy file holds a year column followed by one column per proxy with
 * a header row of ids; the instrumental file holds year,value rows. Missing
 * proxy cells (empty or NA) are tolerated: a proxy with any missing value
 * inside the modeled span is dropped and reported. Years must be contiguous
 * within each file. The calibration span defaults to the overlap of the two
 * files; the reconstruction span defaults to the proxy years left over on
 * one side of the calibration span, and leftovers on both sides require an
 * explicit choice. Malformed cells fail with the file, row, and column
 * named.
 */
[[nodiscard]] inline LoadedPanel load_panel(const std::string& proxy_path,
                                            const std::string& instrumental_path,
                                            const LoadConfig& cfg = {}) {
  using detail::is_missing_cell;
  using detail::parse_double_cell;
  using detail::parse_year_cell;

  std::vector<std::string> lines = detail::read_lines(proxy_path);
  if (lines.size() < 2) throw std::runtime_error(proxy_path + ": need a header row and data rows");
  std::vector<std::string> header = detail::split_csv_line(lines[0]);
  if (header.size() < 2) throw std::runtime_error(proxy_path + ": need a year column and proxies");
  std::vector<std::string> ids(header.begin() + 1, header.end());

  std::vector<long> proxy_years;
  std::vector<std::vector<double>> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    std::vector<std::string> cells = detail::split_csv_line(lines[li]);
    std::string where = proxy_path + ": row " + std::to_string(li + 1);
    if (cells.size() != header.size()) {
      throw std::runtime_error(where + " has " + std::to_string(cells.size()) +
                               " cells, expected " + std::to_string(header.size()));
    }
    long year = parse_year_cell(cells[0], where + ", column '" + header[0] + "'");
    if (!proxy_years.empty()) {
      if (year == proxy_years.back()) throw std::runtime_error(where + ": duplicate year");
      if (year != proxy_years.back() + 1) {
        throw std::runtime_error(proxy_path + ": years must be contiguous; gap between " +
                                 std::to_string(proxy_years.back()) + " and " +
                                 std::to_string(year));
      }
    }
    proxy_years.push_back(year);
    std::vector<double> row(ids.size());
    for (std::size_t j = 0; j < ids.size(); ++j) {
      const std::string& cell = cells[j + 1];
      row[j] = is_missing_cell(cell)
                   ? std::numeric_limits<double>::quiet_NaN()
                   : parse_double_cell(cell, where + ", column '" + ids[j] + "'");
    }
    rows.push_back(std::move(row));
  }

  std::vector<std::string> ilines = detail::read_lines(instrumental_path);
  if (ilines.size() < 2) {
    throw std::runtime_error(instrumental_path + ": need a header row and data rows");
  }
  std::vector<long> instr_years;
  std::vector<double> instr_values;
  for (std::size_t li = 1; li < ilines.size(); ++li) {
    std::vector<std::string> cells = detail::split_csv_line(ilines[li]);
    std::string where = instrumental_path + ": row " + std::to_string(li + 1);
    if (cells.size() != 2) {
      throw std::runtime_error(where + " has " + std::to_string(cells.size()) +
                               " cells, expected 2");
    }
    if (is_missing_cell(cells[1])) continue;
    long year = parse_year_cell(cells[0], where);
    double value = parse_double_cell(cells[1], where + ", column 'value'");
    if (!instr_years.empty()) {
      if (year == instr_years.back()) throw std::runtime_error(where + ": duplicate year");
      if (year != instr_years.back() + 1) {
        throw std::runtime_error(instrumental_path +
                                 ": observed years must be contiguous; gap between " +
                                 std::to_string(instr_years.back()) + " and " +
                                 std::to_string(year));
      }
    }
    instr_years.push_back(year);
    instr_values.push_back(value);
  }
  if (instr_years.empty()) throw std::runtime_error(instrumental_path + ": no observed values");

  const YearSpan proxy_span{proxy_years.front(), proxy_years.back()};
  const YearSpan instr_span{instr_years.front(), instr_years.back()};

  YearSpan calib;
  if (cfg.calibration) {
    calib = *cfg.calibration;
    if (calib.length() < 2) throw std::runtime_error("calibration span must cover at least 2 years");
    if (calib.first < proxy_span.first || calib.last > proxy_span.last) {
      throw std::runtime_error("calibration span extends beyond the proxy years");
    }
    if (calib.first < instr_span.first || calib.last > instr_span.last) {
      throw std::runtime_error("calibration span extends beyond the instrumental years");
    }
  } else {
    calib = {std::max(proxy_span.first, instr_span.first),
             std::min(proxy_span.last, instr_span.last)};
    if (calib.length() < 2) {
      throw std::runtime_error("proxy and instrumental years overlap on fewer than 2 years");
    }
  }

  const bool left_over_before = proxy_span.first < calib.first;
  const bool left_over_after = proxy_span.last > calib.last;
  YearSpan recon;
  bool has_recon = false;
  if (cfg.reconstruction) {
    recon = *cfg.reconstruction;
    has_recon = recon.length() > 0;
    if (has_recon) {
      if (recon.first < proxy_span.first || recon.last > proxy_span.last) {
        throw std::runtime_error("reconstruction span extends beyond the proxy years");
      }
      if (recon.last + 1 != calib.first && calib.last + 1 != recon.first) {
        throw std::runtime_error("reconstruction span must be adjacent to the calibration span");
      }
    }
  } else if (left_over_before && left_over_after) {
    throw std::runtime_error(
        "proxy years extend on both sides of the calibration span; pass an explicit "
        "reconstruction span");
  } else if (left_over_before) {
    recon = {proxy_span.first, calib.first - 1};
    has_recon = true;
  } else if (left_over_after) {
    recon = {calib.last + 1, proxy_span.last};
    has_recon = true;
  }

  const long first = has_recon ? std::min(calib.first, recon.first) : calib.first;
  const long last = has_recon ? std::max(calib.last, recon.last) : calib.last;
  const auto n_rows = static_cast<std::size_t>(last - first + 1);

  // Drop proxies with missing values anywhere inside the modeled span.
  LoadedPanel out;
  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < ids.size(); ++j) {
    bool complete = true;
    for (long yr = first; yr <= last && complete; ++yr) {
      auto r = static_cast<std::size_t>(yr - proxy_span.first);
      complete = std::isfinite(rows[r][j]);
    }
    if (complete) {
      kept.push_back(j);
    } else {
      out.dropped_proxies.push_back(ids[j]);
    }
  }
  if (kept.empty()) {
    throw std::runtime_error("every proxy has missing values inside the modeled span");
  }

  ProxyPanel& panel = out.panel;
  panel.years.resize(n_rows);
  panel.proxies.resize(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(kept.size()));
  panel.instrumental.assign(n_rows, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 0; r < n_rows; ++r) {
    long yr = first + static_cast<long>(r);
    panel.years[r] = yr;
    auto src = static_cast<std::size_t>(yr - proxy_span.first);
    for (std::size_t j = 0; j < kept.size(); ++j) {
      panel.proxies(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = rows[src][kept[j]];
    }
    if (yr >= calib.first && yr <= calib.last) {
      if (yr < instr_span.first || yr > instr_span.last) {
        throw std::runtime_error("instrumental value missing in calibration year " +
                                 std::to_string(yr));
      }
      panel.instrumental[r] = instr_values[static_cast<std::size_t>(yr - instr_span.first)];
    }
  }
  for (std::size_t j = 0; j < kept.size(); ++j) panel.proxy_ids.push_back(ids[kept[j]]);
  panel.calibration = calib;
  panel.reconstruction = has_recon ? recon : YearSpan{};
  panel.has_reconstruction = has_recon;
  panel.validate();
  return out;
}

/// Writes a panel to the two-file CSV layout the loader reads.
inline void write_panel_csv(const ProxyPanel& panel, const std::string& proxy_path,
                            const std::string& instrumental_path) {
  panel.validate();
  for (const std::string& id : panel.proxy_ids) {
    if (id.find(',') != std::string::npos) {
      throw std::invalid_argument("proxy id contains a comma: " + id);
    }
  }
  std::ofstream proxies(proxy_path);
  if (!proxies) throw std::runtime_error("cannot write file: " + proxy_path);
  proxies << "year";
  for (const std::string& id : panel.proxy_ids) proxies << ',' << id;
  proxies << '\n';
  for (std::size_t r = 0; r < panel.years.size(); ++r) {
    proxies << panel.years[r];
    for (Eigen::Index j = 0; j < panel.proxies.cols(); ++j) {
      proxies << ',' << format_double(panel.proxies(static_cast<Eigen::Index>(r), j));
    }
    proxies << '\n';
  }

  std::ofstream instr(instrumental_path);
  if (!instr) throw std::runtime_error("cannot write file: " + instrumental_path);
  instr << "year,value\n";
  for (long yr = panel.calibration.first; yr <= panel.calibration.last; ++yr) {
    auto r = static_cast<std::size_t>(panel.row_of(yr));
    instr << yr << ',' << format_double(panel.instrumental[r]) << '\n';
  }
}

inline constexpr const char* reconstruction_csv_header =
    "time,point,lower,upper,in_sample,smoothed_point,smoothed_lower,smoothed_upper";

/// Writes a reconstruction under the pinned eight-column schema.
inline void write_reconstruction_csv(const ReconstructionResult& r, const std::string& path) {
  const std::size_t n = r.time.size();
  if (r.point.size() != n || r.lower.size() != n || r.upper.size() != n ||
      r.in_sample.size() != n || r.smoothed_point.size() != n || r.smoothed_lower.size() != n ||
      r.smoothed_upper.size() != n) {
    throw std::invalid_argument("reconstruction columns have inconsistent lengths");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << reconstruction_csv_header << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    out << r.time[i] << ',' << format_double(r.point[i]) << ',' << format_double(r.lower[i])
        << ',' << format_double(r.upper[i]) << ',' << r.in_sample[i] << ','
        << format_double(r.smoothed_point[i]) << ',' << format_double(r.smoothed_lower[i]) << ','
        << format_double(r.smoothed_upper[i]) << '\n';
  }
}

/// Reads a reconstruction written by write_reconstruction_csv.
[[nodiscard]] inline ReconstructionResult load_reconstruction_csv(const std::string& path) {
  std::vector<std::string> lines = detail::read_lines(path);
  if (lines.empty() || lines[0] != reconstruction_csv_header) {
    throw std::runtime_error(path + ": missing the reconstruction header row");
  }
  ReconstructionResult r;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    std::vector<std::string> cells = detail::split_csv_line(lines[li]);
    std::string where = path + ": row " + std::to_string(li + 1);
    if (cells.size() != 8) {
      throw std::runtime_error(where + " has " + std::to_string(cells.size()) +
                               " cells, expected 8");
    }
    r.time.push_back(detail::parse_year_cell(cells[0], where));
    r.point.push_back(detail::parse_double_cell(cells[1], where));
    r.lower.push_back(detail::parse_double_cell(cells[2], where));
    r.upper.push_back(detail::parse_double_cell(cells[3], where));
    long flag = detail::parse_year_cell(cells[4], where);
    if (flag != 0 && flag != 1) throw std::runtime_error(where + ": in_sample must be 0 or 1");
    r.in_sample.push_back(static_cast<int>(flag));
    r.smoothed_point.push_back(detail::parse_double_cell(cells[5], where));
    r.smoothed_lower.push_back(detail::parse_double_cell(cells[6], where));
    r.smoothed_upper.push_back(detail::parse_double_cell(cells[7], where));
  }
  return r;
}

inline void to_json(nlohmann::json& j, const RunMetadata& m) {
  j = nlohmann::json{{"tool_version", m.tool_version},
                     {"argv_effective", m.argv_effective},
                     {"fitter", m.fitter},
                     {"tau", m.tau},
                     {"q", m.q},
                     {"k", m.k},
                     {"q_auto", m.q_auto},
                     {"k_auto", m.k_auto},
                     {"innovation", m.innovation},
                     {"centering", m.centering},
                     {"band_target", m.band_target},
                     {"bootstrap_replications", m.bootstrap_replications},
                     {"alpha", m.alpha},
                     {"seed", m.seed},
                     {"smooth_df", m.smooth_df},
                     {"orientation_reversed", m.orientation_reversed},
                     {"calibration_first", m.calibration_first},
                     {"calibration_last", m.calibration_last},
                     {"reconstruction_first", m.reconstruction_first},
                     {"reconstruction_last", m.reconstruction_last},
                     {"has_reconstruction", m.has_reconstruction},
                     {"sigma_naive", m.sigma_naive},
                     {"sigma_corrected", m.sigma_corrected},
                     {"innovation_mean", m.innovation_mean},
                     {"ad_statistic", m.ad_statistic},
                     {"ad_p_value", m.ad_p_value},
                     {"ljung_box_statistic", m.ljung_box_statistic},
                     {"ljung_box_p_value", m.ljung_box_p_value},
                     {"fit_converged", m.fit_converged},
                     {"edge_rows", m.edge_rows},
                     {"bootstrap_failures", m.bootstrap_failures},
                     {"bootstrap_nonconverged", m.bootstrap_nonconverged},
                     {"proxy_ids", m.proxy_ids},
                     {"dropped_proxies", m.dropped_proxies},
                     {"caveat", m.caveat}};
}

inline void from_json(const nlohmann::json& j, RunMetadata& m) {
  j.at("tool_version").get_to(m.tool_version);
  j.at("argv_effective").get_to(m.argv_effective);
  j.at("fitter").get_to(m.fitter);
  j.at("tau").get_to(m.tau);
  j.at("q").get_to(m.q);
  j.at("k").get_to(m.k);
  j.at("q_auto").get_to(m.q_auto);
  j.at("k_auto").get_to(m.k_auto);
  j.at("innovation").get_to(m.innovation);
  j.at("centering").get_to(m.centering);
  j.at("band_target").get_to(m.band_target);
  j.at("bootstrap_replications").get_to(m.bootstrap_replications);
  j.at("alpha").get_to(m.alpha);
  j.at("seed").get_to(m.seed);
  j.at("smooth_df").get_to(m.smooth_df);
  j.at("orientation_reversed").get_to(m.orientation_reversed);
  j.at("calibration_first").get_to(m.calibration_first);
  j.at("calibration_last").get_to(m.calibration_last);
  j.at("reconstruction_first").get_to(m.reconstruction_first);
  j.at("reconstruction_last").get_to(m.reconstruction_last);
  j.at("has_reconstruction").get_to(m.has_reconstruction);
  j.at("sigma_naive").get_to(m.sigma_naive);
  j.at("sigma_corrected").get_to(m.sigma_corrected);
  j.at("innovation_mean").get_to(m.innovation_mean);
  j.at("ad_statistic").get_to(m.ad_statistic);
  j.at("ad_p_value").get_to(m.ad_p_value);
  j.at("ljung_box_statistic").get_to(m.ljung_box_statistic);
  j.at("ljung_box_p_value").get_to(m.ljung_box_p_value);
  j.at("fit_converged").get_to(m.fit_converged);
  j.at("edge_rows").get_to(m.edge_rows);
  j.at("bootstrap_failures").get_to(m.bootstrap_failures);
  j.at("bootstrap_nonconverged").get_to(m.bootstrap_nonconverged);
  j.at("proxy_ids").get_to(m.proxy_ids);
  j.at("dropped_proxies").get_to(m.dropped_proxies);
  j.at("caveat").get_to(m.caveat);
}

/// Writes the metadata sidecar as pretty-printed JSON.
inline void write_metadata_json(const RunMetadata& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  nlohmann::json j = m;
  out << j.dump(2) << '\n';
}

/// Reads a metadata sidecar back.
[[nodiscard]] inline RunMetadata load_metadata_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  nlohmann::json j;
  in >> j;
  return j.get<RunMetadata>();
}

/// Writes the generator truth series (calendar order) next to a panel.
inline void write_truth_csv(const TruthRecord& truth, const std::vector<long>& years,
                            const std::string& path) {
  if (truth.response.size() != years.size() || truth.conditional_location.size() != years.size()) {
    throw std::invalid_argument("truth record does not match the year axis");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "year,response,conditional_location\n";
  for (std::size_t i = 0; i < years.size(); ++i) {
    out << years[i] << ',' << format_double(truth.response[i]) << ','
        << format_double(truth.conditional_location[i]) << '\n';
  }
}

}  // namespace quarts
