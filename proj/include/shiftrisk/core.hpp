#pragma once

// Shared data model for target-population risk estimation: the dataset
// (covariates, source indicator, outcomes, survey design), loss functions,
// frozen prediction models and dataset validation.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace shiftrisk {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorKind {
  invalid_argument,
  schema,
  validation,
  singular_design,
  separation,
  fold_degeneracy,
  nuisance_missing,
  positivity,
  empty_source,
  empty_target,
  oracle_unavailable,
  invalid_strategy,
  not_spd,
  bootstrap_failure,
  replicate_failure,
  io,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::schema: return "schema";
    case ErrorKind::validation: return "validation";
    case ErrorKind::singular_design: return "singular-design";
    case ErrorKind::separation: return "separation";
    case ErrorKind::fold_degeneracy: return "fold-degeneracy";
    case ErrorKind::nuisance_missing: return "nuisance-missing";
    case ErrorKind::positivity: return "positivity";
    case ErrorKind::empty_source: return "empty-source";
    case ErrorKind::empty_target: return "empty-target";
    case ErrorKind::oracle_unavailable: return "oracle-unavailable";
    case ErrorKind::invalid_strategy: return "invalid-strategy";
    case ErrorKind::not_spd: return "not-spd";
    case ErrorKind::bootstrap_failure: return "bootstrap-failure";
    case ErrorKind::replicate_failure: return "replicate-failure";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Numerical failures map to CLI exit code 3, data problems to 2.
inline bool is_numerical(ErrorKind k) {
  switch (k) {
    case ErrorKind::singular_design:
    case ErrorKind::separation:
    case ErrorKind::fold_degeneracy:
    case ErrorKind::positivity:
    case ErrorKind::not_spd:
    case ErrorKind::bootstrap_failure:
    case ErrorKind::replicate_failure:
      return true;
    default:
      return false;
  }
}

// ---------------------------------------------------------------------------
// Loss functions
// ---------------------------------------------------------------------------

enum class LossKind { squared, absolute };

inline const char* to_string(LossKind k) { return k == LossKind::squared ? "squared" : "absolute"; }

// Squared loss applied to a {0,1} outcome is the Brier score.
inline double loss_eval(LossKind kind, double y, double yhat) {
  if (!std::isfinite(y) || !std::isfinite(yhat)) {
    throw Error(ErrorKind::invalid_argument, "loss_eval requires finite inputs");
  }
  const double r = y - yhat;
  return kind == LossKind::squared ? r * r : std::abs(r);
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

// Sentinel for an absent outcome.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

// Rows from the source (D=1) and target (D=0) samples. Survey weights apply
// to target rows; cluster and stratum labels are optional design columns.
// Columns are stored column-major in an Eigen matrix so design building can
// read covariate columns contiguously.
struct Dataset {
  std::vector<std::string> covariate_names;
  Eigen::MatrixXd covariates;          // n x d
  std::vector<std::uint8_t> source;    // D
  std::vector<double> outcome;         // Y, kMissing when absent
  std::vector<double> weight;          // w, defaults to 1
  std::vector<std::string> cluster;    // empty when absent
  std::vector<std::string> stratum;    // empty when absent
  std::vector<double> ghat;            // precomputed g(X*), empty when absent

  std::size_t rows() const { return source.size(); }
  std::size_t dim() const { return covariate_names.size(); }
  bool has_clusters() const { return !cluster.empty(); }
  bool has_strata() const { return !stratum.empty(); }

  std::size_t n_source() const {
    std::size_t k = 0;
    for (auto d : source) k += d;
    return k;
  }
  std::size_t n_target() const { return rows() - n_source(); }

  bool has_outcome(std::size_t i) const { return !is_missing(outcome[i]); }

  std::optional<std::size_t> column_index(const std::string& name) const {
    for (std::size_t j = 0; j < covariate_names.size(); ++j) {
      if (covariate_names[j] == name) return j;
    }
    return std::nullopt;
  }

  // Rows in the given order; duplicates allowed.
  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out;
    out.covariate_names = covariate_names;
    out.covariates.resize(static_cast<Eigen::Index>(idx.size()), covariates.cols());
    out.source.reserve(idx.size());
    out.outcome.reserve(idx.size());
    out.weight.reserve(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto i = idx[k];
      out.covariates.row(static_cast<Eigen::Index>(k)) = covariates.row(static_cast<Eigen::Index>(i));
      out.source.push_back(source[i]);
      out.outcome.push_back(outcome[i]);
      out.weight.push_back(weight[i]);
      if (has_clusters()) out.cluster.push_back(cluster[i]);
      if (has_strata()) out.stratum.push_back(stratum[i]);
      if (!ghat.empty()) out.ghat.push_back(ghat[i]);
    }
    return out;
  }
};

// Builds a dataset with unit weights and no design columns.
inline Dataset make_dataset(std::vector<std::string> names, Eigen::MatrixXd x,
                            std::vector<std::uint8_t> d, std::vector<double> y) {
  Dataset ds;
  ds.covariate_names = std::move(names);
  ds.covariates = std::move(x);
  ds.source = std::move(d);
  ds.outcome = std::move(y);
  ds.weight.assign(ds.source.size(), 1.0);
  return ds;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class ValidationMode {
  estimate,         // outcomes required on D=1 rows
  survey_estimate,  // additionally: D=1 rows carry weight 1
  oracle,           // outcomes required on every row
};

struct Violation {
  std::size_t row;  // SIZE_MAX for dataset-level rules
  std::string rule;
  std::string message;
};

inline constexpr std::size_t kDatasetLevel = static_cast<std::size_t>(-1);

// Reports every violated invariant, not just the first.
inline std::vector<Violation> validate_dataset(const Dataset& data, ValidationMode mode) {
  std::vector<Violation> out;
  const std::size_t n = data.rows();
  auto row_msg = [](const char* what, std::size_t i) {
    std::ostringstream os;
    os << what << ", row " << i;
    return os.str();
  };

  if (static_cast<std::size_t>(data.covariates.rows()) != n ||
      static_cast<std::size_t>(data.covariates.cols()) != data.dim() || data.outcome.size() != n ||
      data.weight.size() != n || (data.has_clusters() && data.cluster.size() != n) ||
      (data.has_strata() && data.stratum.size() != n) || (!data.ghat.empty() && data.ghat.size() != n)) {
    out.push_back({kDatasetLevel, "shape", "column lengths disagree with the row count"});
    return out;
  }

  std::size_t n1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto d = data.source[i];
    if (d > 1) out.push_back({i, "source-indicator", row_msg("source indicator not in {0,1}", i)});
    n1 += d == 1;
    for (Eigen::Index j = 0; j < data.covariates.cols(); ++j) {
      if (!std::isfinite(data.covariates(static_cast<Eigen::Index>(i), j))) {
        out.push_back({i, "missing-covariate",
                       row_msg(("missing or non-finite covariate '" +
                                data.covariate_names[static_cast<std::size_t>(j)] + "'")
                                   .c_str(),
                               i)});
        break;
      }
    }
    const double w = data.weight[i];
    if (!std::isfinite(w)) {
      out.push_back({i, "non-finite-weight", row_msg("non-finite weight", i)});
    } else if (w <= 0.0) {
      out.push_back({i, "non-positive-weight", row_msg("non-positive weight", i)});
    }
    const bool need_y = (d == 1) || mode == ValidationMode::oracle;
    if (need_y && !data.has_outcome(i)) {
      out.push_back({i, "missing-outcome", row_msg("missing outcome", i)});
    } else if (data.has_outcome(i) && !std::isfinite(data.outcome[i])) {
      out.push_back({i, "non-finite-outcome", row_msg("non-finite outcome", i)});
    }
    if (mode == ValidationMode::survey_estimate && d == 1 && w != 1.0) {
      out.push_back({i, "source-weight", row_msg("source row must carry weight 1", i)});
    }
  }
  if (n1 == 0) out.push_back({kDatasetLevel, "empty-source", "no D=1 rows"});
  if (n1 == n) out.push_back({kDatasetLevel, "empty-target", "no D=0 rows"});
  return out;
}

inline void require_valid(const Dataset& data, ValidationMode mode) {
  const auto v = validate_dataset(data, mode);
  if (v.empty()) return;
  std::ostringstream os;
  os << v.size() << " violation(s):";
  for (const auto& e : v) os << "\n  [" << e.rule << "] " << e.message;
  throw Error(ErrorKind::validation, os.str());
}

// ---------------------------------------------------------------------------
// Prediction models
// ---------------------------------------------------------------------------

// Frozen map from the X* sub-vector to a prediction. The predictor receives
// the selected columns in column_subset order.
class PredictionModel {
 public:
  using Predictor = std::function<double(std::span<const double>)>;

  PredictionModel(std::vector<std::string> columns, Predictor f)
      : columns_(std::move(columns)), predictor_(std::move(f)) {}

  const std::vector<std::string>& column_subset() const { return columns_; }
  double operator()(std::span<const double> xstar) const { return predictor_(xstar); }

 private:
  std::vector<std::string> columns_;
  Predictor predictor_;
};

inline double expit(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Main-effects logistic model: coefficients[0] is the intercept, the rest
// pair with columns in order.
inline PredictionModel logistic_model(std::vector<std::string> columns, std::vector<double> coefficients) {
  if (coefficients.size() != columns.size() + 1) {
    throw Error(ErrorKind::invalid_argument, "logistic model needs one coefficient per column plus intercept");
  }
  return PredictionModel(std::move(columns), [beta = std::move(coefficients)](std::span<const double> x) {
    double z = beta[0];
    for (std::size_t j = 0; j < x.size(); ++j) z += beta[j + 1] * x[j];
    return expit(z);
  });
}

inline PredictionModel constant_model(double c) {
  return PredictionModel({}, [c](std::span<const double>) { return c; });
}

// Row-wise application of the model to its X* columns, in dataset order.
inline std::vector<double> select_model_inputs(const Dataset& data, const PredictionModel& model) {
  std::vector<Eigen::Index> cols;
  for (const auto& name : model.column_subset()) {
    auto j = data.column_index(name);
    if (!j) throw Error(ErrorKind::schema, "model column '" + name + "' not found in dataset");
    cols.push_back(static_cast<Eigen::Index>(*j));
  }
  std::vector<double> out(data.rows());
  std::vector<double> buf(cols.size());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t k = 0; k < cols.size(); ++k) buf[k] = data.covariates(static_cast<Eigen::Index>(i), cols[k]);
    out[i] = model(buf);
  }
  return out;
}

// Per-row L(Y, g(X*)); kMissing where Y is absent.
inline std::vector<double> compute_losses(const Dataset& data, std::span<const double> predictions, LossKind loss) {
  std::vector<double> out(data.rows(), kMissing);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    if (data.has_outcome(i)) out[i] = loss_eval(loss, data.outcome[i], predictions[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class Method { naive, cl, iw, dr, oracle };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::naive: return "naive";
    case Method::cl: return "cl";
    case Method::iw: return "iw";
    case Method::dr: return "dr";
    case Method::oracle: return "oracle";
  }
  return "unknown";
}

struct EstimateReport {
  Method method = Method::dr;
  double estimate = 0.0;
  std::optional<double> std_error;
  std::optional<double> ci_lower;
  std::optional<double> ci_upper;
  std::string ci_method;  // "percentile", "normal" or empty
  std::string nuisance_meta;
  std::size_t n0 = 0;
  std::size_t n1 = 0;
};

}  // namespace shiftrisk
