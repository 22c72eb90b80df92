#pragma once

// File formats: dataset CSV, plain-text model files, key=value reports, CSV
// result tables and JSON scenario files.

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "shiftrisk/core.hpp"
#include "shiftrisk/simulation.hpp"

namespace shiftrisk {

inline constexpr int kSchemaVersion = 1;

// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error(ErrorKind::io, "cannot format number");
  return std::string(buf, end);
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

// Splits one CSV record; double-quoted fields may contain commas and "".
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

// ---------------------------------------------------------------------------
// Dataset CSV
// ---------------------------------------------------------------------------

struct CsvOptions {
  std::string ghat_column = "GHAT";  // case-insensitive; ignored when absent
  bool require_source = true;        // without a D column every row is D=1
};

struct CsvDataset {
  Dataset data;
  bool has_weight_column = false;
  bool has_source_column = false;
};

// Header row required. Reserved (case-insensitive): D, Y, W, CLUSTER,
// STRATUM and the GHAT column; every other column is a real covariate.
// Blank Y means "no outcome"; blank or unparsable covariates become NaN and
// are rejected by validate_dataset.
inline CsvDataset read_dataset_csv(std::istream& in, const CsvOptions& opt = {}) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::schema, "empty CSV input");
  const auto header = split_csv_line(line);
  int col_d = -1, col_y = -1, col_w = -1, col_c = -1, col_s = -1, col_g = -1;
  std::vector<int> cov_cols;
  CsvDataset out;
  for (int j = 0; j < static_cast<int>(header.size()); ++j) {
    const auto name = upper(header[static_cast<std::size_t>(j)]);
    auto claim = [&](int& slot) {
      if (slot >= 0) throw Error(ErrorKind::schema, "duplicate reserved column '" + header[static_cast<std::size_t>(j)] + "'");
      slot = j;
    };
    if (name == "D") claim(col_d);
    else if (name == "Y") claim(col_y);
    else if (name == "W") claim(col_w);
    else if (name == "CLUSTER") claim(col_c);
    else if (name == "STRATUM") claim(col_s);
    else if (!opt.ghat_column.empty() && name == upper(opt.ghat_column)) claim(col_g);
    else {
      if (header[static_cast<std::size_t>(j)].empty()) throw Error(ErrorKind::schema, "empty column name");
      cov_cols.push_back(j);
      out.data.covariate_names.push_back(header[static_cast<std::size_t>(j)]);
    }
  }
  if (col_d < 0 && opt.require_source) throw Error(ErrorKind::schema, "missing required column 'D'");
  if (col_y < 0) throw Error(ErrorKind::schema, "missing required column 'Y'");
  out.has_weight_column = col_w >= 0;
  out.has_source_column = col_d >= 0;

  std::vector<std::vector<double>> rows;
  Dataset& ds = out.data;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw Error(ErrorKind::schema, "line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                         " fields, found " + std::to_string(f.size()));
    }
    auto at = [&](int j) -> const std::string& { return f[static_cast<std::size_t>(j)]; };
    auto number = [&](int j, const char* what) {
      auto v = parse_double(at(j));
      if (!v) throw Error(ErrorKind::schema, "line " + std::to_string(line_no) + ": bad " + what + " '" + at(j) + "'");
      return *v;
    };
    if (col_d >= 0) {
      const double d = number(col_d, "D");
      if (d != 0.0 && d != 1.0) throw Error(ErrorKind::schema, "line " + std::to_string(line_no) + ": D must be 0 or 1");
      ds.source.push_back(static_cast<std::uint8_t>(d));
    } else {
      ds.source.push_back(1);
    }
    ds.outcome.push_back(at(col_y).empty() ? kMissing : number(col_y, "Y"));
    ds.weight.push_back(col_w >= 0 ? number(col_w, "W") : 1.0);
    if (col_c >= 0) ds.cluster.push_back(at(col_c));
    if (col_s >= 0) ds.stratum.push_back(at(col_s));
    if (col_g >= 0) ds.ghat.push_back(number(col_g, "prediction"));
    std::vector<double> r;
    r.reserve(cov_cols.size());
    for (int j : cov_cols) r.push_back(parse_double(at(j)).value_or(std::numeric_limits<double>::quiet_NaN()));
    rows.push_back(std::move(r));
  }
  ds.covariates.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cov_cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cov_cols.size(); ++j) {
      ds.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return out;
}

inline CsvDataset read_dataset_csv(const std::string& path, const CsvOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  return read_dataset_csv(in, opt);
}

inline void write_dataset_csv(std::ostream& out, const Dataset& ds, bool with_weights = true) {
  for (const auto& n : ds.covariate_names) out << n << ',';
  out << "D,Y";
  if (with_weights) out << ",W";
  if (ds.has_clusters()) out << ",CLUSTER";
  if (ds.has_strata()) out << ",STRATUM";
  if (!ds.ghat.empty()) out << ",GHAT";
  out << '\n';
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.covariates.cols(); ++j) out << format_double(ds.covariates(static_cast<Eigen::Index>(i), j)) << ',';
    out << int(ds.source[i]) << ',' << (ds.has_outcome(i) ? format_double(ds.outcome[i]) : "");
    if (with_weights) out << ',' << format_double(ds.weight[i]);
    if (ds.has_clusters()) out << ',' << ds.cluster[i];
    if (ds.has_strata()) out << ',' << ds.stratum[i];
    if (!ds.ghat.empty()) out << ',' << format_double(ds.ghat[i]);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------
//
//   # shiftrisk model
//   schema_version=1
//   feature_map=linear
//   link=logit
//   (intercept)=-1.25
//   age=0.031
//   ...

struct ModelFile {
  std::vector<std::string> columns;
  std::vector<double> coefficients;  // intercept first

  PredictionModel model() const { return logistic_model(columns, coefficients); }
};

inline void write_model_file(std::ostream& out, const ModelFile& m) {
  out << "# shiftrisk model\n";
  out << "schema_version=" << kSchemaVersion << "\n";
  out << "feature_map=linear\n";
  out << "link=logit\n";
  out << "(intercept)=" << format_double(m.coefficients.at(0)) << "\n";
  for (std::size_t j = 0; j < m.columns.size(); ++j) out << m.columns[j] << "=" << format_double(m.coefficients.at(j + 1)) << "\n";
}

inline ModelFile read_model_file(std::istream& in) {
  ModelFile m;
  std::string line;
  bool have_schema = false;
  bool have_intercept = false;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.rfind('=');
    if (eq == std::string::npos) throw Error(ErrorKind::schema, "model file: expected name=value, got '" + line + "'");
    const auto key = trim(line.substr(0, eq));
    const auto val = trim(line.substr(eq + 1));
    if (key == "schema_version") {
      if (val != std::to_string(kSchemaVersion)) throw Error(ErrorKind::schema, "model file: unsupported schema " + val);
      have_schema = true;
    } else if (key == "feature_map") {
      if (val != "linear") throw Error(ErrorKind::schema, "model file: only main-effects (linear) models are supported");
    } else if (key == "link") {
      if (val != "logit") throw Error(ErrorKind::schema, "model file: only the logit link is supported");
    } else {
      auto v = parse_double(val);
      if (!v) throw Error(ErrorKind::schema, "model file: bad coefficient for '" + key + "'");
      if (key == "(intercept)") {
        if (have_intercept) throw Error(ErrorKind::schema, "model file: duplicate intercept");
        m.coefficients.insert(m.coefficients.begin(), *v);
        have_intercept = true;
      } else {
        m.columns.push_back(key);
        m.coefficients.push_back(*v);
      }
    }
  }
  if (!have_schema) throw Error(ErrorKind::schema, "model file: missing schema_version");
  if (!have_intercept) throw Error(ErrorKind::schema, "model file: missing (intercept)");
  return m;
}

// ---------------------------------------------------------------------------
// Key=value reports
// ---------------------------------------------------------------------------

class Report {
 public:
  void set(const std::string& key, const std::string& value) {
    for (auto& kv : entries_) {
      if (kv.first == key) {
        kv.second = value;
        return;
      }
    }
    entries_.emplace_back(key, value);
  }
  void set(const std::string& key, double value) { set(key, format_double(value)); }
  void set(const std::string& key, std::size_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, int value) { set(key, std::to_string(value)); }
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }

  std::optional<std::string> get(const std::string& key) const {
    for (const auto& kv : entries_) {
      if (kv.first == key) return kv.second;
    }
    return std::nullopt;
  }

  std::optional<double> number(const std::string& key) const {
    auto v = get(key);
    return v ? parse_double(*v) : std::nullopt;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  void write(std::ostream& out) const {
    for (const auto& [k, v] : entries_) out << k << '=' << v << '\n';
  }

  // Parses and re-validates a report: schema version, numeric estimates, and
  // ci_lower <= estimate <= ci_upper for normal-theory intervals.
  static Report read(std::istream& in) {
    Report r;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::schema, "report: malformed line '" + line + "'");
      r.entries_.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    if (r.get("schema_version") != std::to_string(kSchemaVersion)) {
      throw Error(ErrorKind::schema, "report: missing or unsupported schema_version");
    }
    for (const auto& [k, v] : r.entries_) {
      const auto dot = k.rfind('.');
      if (dot == std::string::npos || k.substr(dot) != ".estimate") continue;
      const auto stem = k.substr(0, dot);
      const auto est = parse_double(v);
      if (!est) throw Error(ErrorKind::schema, "report: non-numeric " + k);
      if (r.get(stem + ".ci_method") == std::string("normal")) {
        const auto lo = r.number(stem + ".ci_lower");
        const auto hi = r.number(stem + ".ci_upper");
        if (!lo || !hi || *lo > *est || *est > *hi) throw Error(ErrorKind::schema, "report: inconsistent CI for " + stem);
      }
    }
    return r;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// ---------------------------------------------------------------------------
// Result tables
// ---------------------------------------------------------------------------

inline void write_config_comments(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& config) {
  out << "# schema_version=" << kSchemaVersion << '\n';
  for (const auto& [k, v] : config) out << "# " << k << '=' << v << '\n';
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "arm,avg_estimate,sqrt_n_bias,sqrt_n_sd,rel_bias_pct\n";
  for (const auto& r : rows) {
    out << r.arm << ',' << format_double(r.avg_estimate) << ',' << format_double(r.sqrt_n_bias) << ','
        << format_double(r.sqrt_n_sd) << ',' << format_double(100.0 * r.rel_bias) << '\n';
  }
}

// Reads back the rows of write_summary_csv, skipping comment lines.
inline std::vector<SummaryRow> read_summary_csv(std::istream& in) {
  std::vector<SummaryRow> rows;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 5) throw Error(ErrorKind::schema, "summary CSV: expected 5 fields");
    SummaryRow r;
    r.arm = f[0];
    r.avg_estimate = parse_double(f[1]).value_or(kMissing);
    r.sqrt_n_bias = parse_double(f[2]).value_or(kMissing);
    r.sqrt_n_sd = parse_double(f[3]).value_or(kMissing);
    r.rel_bias = parse_double(f[4]).value_or(kMissing) / 100.0;
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Scenario files (JSON object mirroring ScenarioSpec; every key optional)
// ---------------------------------------------------------------------------

inline ScenarioSpec scenario_from_json(const nlohmann::json& j) {
  ScenarioSpec s;
  static const std::vector<std::string> known{"n_total", "dim", "correlation", "active", "selection", "outcome",
                                              "train_fraction", "replications", "seed", "truth_draws", "epsilon",
                                              "arms", "spline", "threads", "sandwich"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw Error(ErrorKind::schema, "scenario: unknown key '" + it.key() + "'");
    }
  }
  auto logit = [](const nlohmann::json& o, LogitSpec def) {
    def.intercept = o.value("intercept", def.intercept);
    def.linear = o.value("linear", def.linear);
    def.quadratic = o.value("quadratic", def.quadratic);
    return def;
  };
  try {
    s.n_total = j.value("n_total", s.n_total);
    s.dim = j.value("dim", s.dim);
    s.correlation = j.value("correlation", s.correlation);
    s.active = j.value("active", s.active);
    if (j.contains("selection")) s.selection = logit(j.at("selection"), s.selection);
    if (j.contains("outcome")) s.outcome = logit(j.at("outcome"), s.outcome);
    s.train_fraction = j.value("train_fraction", s.train_fraction);
    s.replications = j.value("replications", s.replications);
    s.seed = j.value("seed", s.seed);
    s.truth_draws = j.value("truth_draws", s.truth_draws);
    s.epsilon = j.value("epsilon", s.epsilon);
    s.threads = j.value("threads", s.threads);
    s.sandwich = j.value("sandwich", s.sandwich);
    if (j.contains("arms")) {
      s.arms.clear();
      for (const auto& a : j.at("arms")) s.arms.push_back(parse_arm(a.get<std::string>()));
    }
    if (j.contains("spline")) {
      const auto& sp = j.at("spline");
      s.spline.interior_knots = sp.value("interior_knots", s.spline.interior_knots);
      s.spline.degree = sp.value("degree", s.spline.degree);
      if (sp.contains("lambda_grid")) s.spline.lambda_grid = sp.at("lambda_grid").get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::schema, std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

inline nlohmann::json scenario_to_json(const ScenarioSpec& s) {
  nlohmann::json j;
  j["n_total"] = s.n_total;
  j["dim"] = s.dim;
  j["correlation"] = s.correlation;
  j["active"] = s.active;
  j["selection"] = {{"intercept", s.selection.intercept}, {"linear", s.selection.linear}, {"quadratic", s.selection.quadratic}};
  j["outcome"] = {{"intercept", s.outcome.intercept}, {"linear", s.outcome.linear}, {"quadratic", s.outcome.quadratic}};
  j["train_fraction"] = s.train_fraction;
  j["replications"] = s.replications;
  j["seed"] = s.seed;
  j["truth_draws"] = s.truth_draws;
  j["epsilon"] = s.epsilon;
  j["sandwich"] = s.sandwich;
  std::vector<std::string> arms;
  for (auto a : s.arms) arms.push_back(arm_info(a).key);
  j["arms"] = arms;
  j["spline"] = {{"interior_knots", s.spline.interior_knots}, {"degree", s.spline.degree}, {"lambda_grid", s.spline.lambda_grid}};
  return j;
}

inline ScenarioSpec read_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  try {
    return scenario_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::schema, std::string("scenario: ") + e.what());
  }
}

}  // namespace shiftrisk
