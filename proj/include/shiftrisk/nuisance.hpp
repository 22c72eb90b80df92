#pragma once

// Nuisance functions for risk transport:
//   p(X) = Pr[D=1 | X]                  source-membership probability
//   h(X) = E[L(Y, g(X*)) | X, D=1]      conditional expected loss
// Both are fit by regression over a feature map, optionally cross-fit.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "shiftrisk/core.hpp"
#include "shiftrisk/features.hpp"
#include "shiftrisk/logistic.hpp"
#include "shiftrisk/rng.hpp"

namespace shiftrisk {

enum class HStrategy { binary, direct };

inline const char* to_string(HStrategy s) { return s == HStrategy::binary ? "binary" : "direct"; }

inline HStrategy parse_h_strategy(const std::string& s) {
  if (s == "binary" || s == "binary-outcome-model") return HStrategy::binary;
  if (s == "direct" || s == "direct-loss-regression") return HStrategy::direct;
  throw Error(ErrorKind::invalid_argument, "unknown h strategy '" + s + "'");
}

// E[(Y-g)^2] for Y ~ Bernoulli(q): q(1-g)^2 + (1-q)g^2.
inline double h_from_outcome_prob(double q, double g) { return q * (1.0 - 2.0 * g) + g * g; }

struct FitDiagnostic {
  std::string name;
  int fold = 0;
  bool converged = true;
  int iterations = 0;
  double ridge = 0.0;
};

// ---------------------------------------------------------------------------
// Fitted regression models bound to their design
// ---------------------------------------------------------------------------

struct ProbabilityModel {
  Design design;
  LogisticFit fit;

  Eigen::VectorXd predict(const Eigen::MatrixXd& covariates) const {
    return predict_prob(fit, design.transform(covariates));
  }
};

struct MeanModel {
  Design design;
  Eigen::VectorXd coefficients;
  double ridge = 0.0;

  Eigen::VectorXd predict(const Eigen::MatrixXd& covariates) const {
    return design.transform(covariates) * coefficients;
  }
};

namespace detail {

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(idx[k]));
  return out;
}

template <typename T>
std::vector<T> take(std::span<const T> v, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

// Interleaved 3-fold split for ridge selection; rows are already in random
// order wherever this is used on simulated data.
inline constexpr int kRidgeFolds = 3;

template <typename FitEval>
double select_ridge(const std::vector<double>& grid, Eigen::Index n, FitEval&& held_out_loss) {
  double best = grid.front();
  double best_loss = std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    double total = 0.0;
    for (int f = 0; f < kRidgeFolds && std::isfinite(total); ++f) {
      std::vector<std::size_t> train;
      std::vector<std::size_t> test;
      for (Eigen::Index i = 0; i < n; ++i) (i % kRidgeFolds == f ? test : train).push_back(static_cast<std::size_t>(i));
      try {
        total += held_out_loss(lambda, train, test);
      } catch (const Error&) {
        total = std::numeric_limits<double>::infinity();
      }
    }
    if (total < best_loss) {
      best_loss = total;
      best = lambda;
    }
  }
  return best;
}

}  // namespace detail

// Logistic regression of labels on the feature map. Parametric maps are
// fit unpenalized; the spline map picks its ridge penalty from the map's
// grid by 3-fold held-out weighted deviance.
inline ProbabilityModel fit_probability_model(const Eigen::MatrixXd& covariates, std::span<const double> labels,
                                              std::span<const double> weights, const FeatureMap& map,
                                              const IrlsOptions& irls = {}) {
  double lambda = 0.0;
  if (map.kind == FeatureKind::spline) {
    lambda = detail::select_ridge(map.lambda_grid, covariates.rows(),
                                  [&](double l, const std::vector<std::size_t>& tr, const std::vector<std::size_t>& te) {
                                    const auto xtr = detail::take_rows(covariates, tr);
                                    const auto design = Design::fit(map, xtr);
                                    const auto ytr = detail::take(labels, std::span<const std::size_t>(tr));
                                    const auto wtr = detail::take(weights, std::span<const std::size_t>(tr));
                                    const auto fit = fit_logistic_irls(design.transform(xtr), ytr, wtr, l, irls);
                                    const auto p = predict_prob(fit, design.transform(detail::take_rows(covariates, te)));
                                    double dev = 0.0;
                                    for (std::size_t k = 0; k < te.size(); ++k) {
                                      const double pk = std::clamp(p(static_cast<Eigen::Index>(k)), 1e-12, 1.0 - 1e-12);
                                      const double yk = labels[te[k]];
                                      dev -= 2.0 * weights[te[k]] * (yk * std::log(pk) + (1.0 - yk) * std::log(1.0 - pk));
                                    }
                                    return dev;
                                  });
  }
  ProbabilityModel model{Design::fit(map, covariates), {}};
  model.fit = fit_logistic_irls(model.design.transform(covariates), labels, weights, lambda, irls);
  return model;
}

// Least-squares regression of a response on the feature map, ridge selected
// by held-out weighted squared error for the spline map.
inline MeanModel fit_mean_model(const Eigen::MatrixXd& covariates, std::span<const double> response,
                                std::span<const double> weights, const FeatureMap& map) {
  double lambda = 0.0;
  if (map.kind == FeatureKind::spline) {
    lambda = detail::select_ridge(map.lambda_grid, covariates.rows(),
                                  [&](double l, const std::vector<std::size_t>& tr, const std::vector<std::size_t>& te) {
                                    const auto xtr = detail::take_rows(covariates, tr);
                                    const auto design = Design::fit(map, xtr);
                                    const auto ytr = detail::take(response, std::span<const std::size_t>(tr));
                                    const auto wtr = detail::take(weights, std::span<const std::size_t>(tr));
                                    const auto beta = fit_least_squares(design.transform(xtr), ytr, wtr, l);
                                    const Eigen::VectorXd pred = design.transform(detail::take_rows(covariates, te)) * beta;
                                    double sse = 0.0;
                                    for (std::size_t k = 0; k < te.size(); ++k) {
                                      const double r = response[te[k]] - pred(static_cast<Eigen::Index>(k));
                                      sse += weights[te[k]] * r * r;
                                    }
                                    return sse;
                                  });
  }
  MeanModel model{Design::fit(map, covariates), {}, lambda};
  model.coefficients = fit_least_squares(model.design.transform(covariates), response, weights, lambda);
  return model;
}

// ---------------------------------------------------------------------------
// p(X)
// ---------------------------------------------------------------------------

struct PEstimate {
  std::vector<double> p_hat;
  std::size_t truncation_count = 0;
  FitDiagnostic diagnostic;
};

inline std::size_t truncate_probabilities(std::vector<double>& p, double epsilon) {
  std::size_t clipped = 0;
  for (double& v : p) {
    const double c = std::clamp(v, epsilon, 1.0 - epsilon);
    clipped += c != v;
    v = c;
  }
  return clipped;
}

// Fits D on the features over the training rows (observation weights w when
// survey weighted, else 1) and predicts on the evaluation rows, truncated to
// [epsilon, 1 - epsilon].
inline PEstimate fit_p_on(const Dataset& data, std::span<const std::size_t> train, std::span<const std::size_t> eval,
                          const FeatureMap& map, bool survey_weighted, double epsilon, const IrlsOptions& irls = {}) {
  if (!(epsilon >= 0.0 && epsilon < 0.5)) throw Error(ErrorKind::invalid_argument, "epsilon must lie in [0, 0.5)");
  std::vector<double> labels;
  std::vector<double> weights;
  labels.reserve(train.size());
  weights.reserve(train.size());
  for (auto i : train) {
    labels.push_back(static_cast<double>(data.source[i]));
    weights.push_back(survey_weighted ? data.weight[i] : 1.0);
  }
  const auto model = fit_probability_model(detail::take_rows(data.covariates, train), labels, weights, map, irls);
  const Eigen::VectorXd p = model.predict(detail::take_rows(data.covariates, eval));
  PEstimate out;
  out.p_hat.assign(p.data(), p.data() + p.size());
  out.truncation_count = truncate_probabilities(out.p_hat, epsilon);
  out.diagnostic = {"p", 0, model.fit.converged, model.fit.iterations, model.fit.ridge};
  return out;
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

inline PEstimate fit_p(const Dataset& data, const FeatureMap& map, bool survey_weighted, double epsilon = 1e-4,
                       const IrlsOptions& irls = {}) {
  const auto idx = all_rows(data.rows());
  return fit_p_on(data, idx, idx, map, survey_weighted, epsilon, irls);
}

// ---------------------------------------------------------------------------
// h(X)
// ---------------------------------------------------------------------------

struct HEstimate {
  std::vector<double> h_hat;
  FitDiagnostic diagnostic;
};

// Fits the conditional loss on the D=1 rows among `train` and evaluates it on
// `eval`. predictions holds g(X*) for every dataset row.
//   binary: logistic q(X) = Pr[Y=1 | X, D=1], then h = q(1-2g) + g^2
//   direct: least squares of L(Y, g) on the features, clamped at 0
inline HEstimate fit_h_on(const Dataset& data, std::span<const double> predictions, LossKind loss,
                          std::span<const std::size_t> train, std::span<const std::size_t> eval, const FeatureMap& map,
                          HStrategy strategy, const IrlsOptions& irls = {}) {
  if (predictions.size() != data.rows()) throw Error(ErrorKind::invalid_argument, "one prediction per row required");
  std::vector<std::size_t> src;
  for (auto i : train) {
    if (data.source[i] == 1) src.push_back(i);
  }
  if (src.empty()) throw Error(ErrorKind::empty_source, "no D=1 rows to fit h");

  std::vector<double> response;
  response.reserve(src.size());
  for (auto i : src) {
    if (!data.has_outcome(i)) throw Error(ErrorKind::validation, "missing outcome on a source row");
    const double y = data.outcome[i];
    if (strategy == HStrategy::binary) {
      if (loss != LossKind::squared) {
        throw Error(ErrorKind::invalid_strategy, "binary-outcome strategy requires the squared (Brier) loss");
      }
      if (y != 0.0 && y != 1.0) throw Error(ErrorKind::invalid_strategy, "binary-outcome strategy requires Y in {0,1}");
      response.push_back(y);
    } else {
      response.push_back(loss_eval(loss, y, predictions[i]));
    }
  }
  const std::vector<double> unit(src.size(), 1.0);
  const auto xtrain = detail::take_rows(data.covariates, src);
  const auto xeval = detail::take_rows(data.covariates, eval);

  HEstimate out;
  out.h_hat.resize(eval.size());
  if (strategy == HStrategy::binary) {
    const auto model = fit_probability_model(xtrain, response, unit, map, irls);
    const Eigen::VectorXd q = model.predict(xeval);
    for (std::size_t k = 0; k < eval.size(); ++k) {
      out.h_hat[k] = h_from_outcome_prob(q(static_cast<Eigen::Index>(k)), predictions[eval[k]]);
    }
    out.diagnostic = {"h", 0, model.fit.converged, model.fit.iterations, model.fit.ridge};
  } else {
    const auto model = fit_mean_model(xtrain, response, unit, map);
    const Eigen::VectorXd m = model.predict(xeval);
    for (std::size_t k = 0; k < eval.size(); ++k) out.h_hat[k] = std::max(0.0, m(static_cast<Eigen::Index>(k)));
    out.diagnostic = {"h", 0, true, 1, model.ridge};
  }
  return out;
}

inline HEstimate fit_h(const Dataset& data, std::span<const double> predictions, LossKind loss, const FeatureMap& map,
                       HStrategy strategy, const IrlsOptions& irls = {}) {
  const auto idx = all_rows(data.rows());
  return fit_h_on(data, predictions, loss, idx, idx, map, strategy, irls);
}

inline HEstimate fit_h(const Dataset& data, const PredictionModel& model, LossKind loss, const FeatureMap& map,
                       HStrategy strategy, const IrlsOptions& irls = {}) {
  const auto g = select_model_inputs(data, model);
  return fit_h(data, g, loss, map, strategy, irls);
}

// ---------------------------------------------------------------------------
// Cross-fitting
// ---------------------------------------------------------------------------

struct NuisanceConfig {
  FeatureMap p_map = FeatureMap::quadratic();
  FeatureMap h_map = FeatureMap::quadratic();
  HStrategy h_strategy = HStrategy::binary;
  int folds = 1;
  double epsilon = 1e-4;
  bool survey_weighted = false;
  std::uint64_t seed = 0;
  bool fit_p = true;
  bool fit_h = true;
  IrlsOptions irls{};

  std::string describe() const {
    std::ostringstream os;
    os << "p.map=" << p_map.describe() << ";h.map=" << h_map.describe() << ";h.strategy=" << to_string(h_strategy)
       << ";folds=" << folds << ";epsilon=" << epsilon << ";survey=" << (survey_weighted ? "on" : "off");
    return os.str();
  }
};

struct NuisanceEstimates {
  std::vector<double> p_hat;  // empty when not fit
  std::vector<double> h_hat;  // empty when not fit
  std::vector<int> fold_of;
  std::size_t truncation_count = 0;
  std::vector<FitDiagnostic> diagnostics;

  bool all_converged() const {
    return std::all_of(diagnostics.begin(), diagnostics.end(), [](const auto& d) { return d.converged; });
  }
};

// Stratified fold labels: within each D group the rows are shuffled by a
// stream keyed on seed and dealt round-robin into K folds. Depends only on
// (seed, D pattern, K).
inline std::vector<int> assign_folds(std::span<const std::uint8_t> source, int k, std::uint64_t seed) {
  if (k < 1) throw Error(ErrorKind::invalid_argument, "fold count must be >= 1");
  std::vector<int> fold(source.size(), 0);
  if (k == 1) return fold;
  auto rng = make_stream(seed, 0, Purpose::folds);
  for (std::uint8_t group : {std::uint8_t{1}, std::uint8_t{0}}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (source[i] == group) idx.push_back(i);
    }
    shuffle(idx, rng);
    for (std::size_t pos = 0; pos < idx.size(); ++pos) fold[idx[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
  }
  for (int f = 0; f < k; ++f) {
    bool has0 = false;
    bool has1 = false;
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (fold[i] != f) continue;
      (source[i] ? has1 : has0) = true;
    }
    if (!has0 || !has1) {
      throw Error(ErrorKind::fold_degeneracy,
                  "fold " + std::to_string(f) + " lacks D=0 or D=1 rows; reduce the fold count");
    }
  }
  return fold;
}

// p and h for every row. With K=1 both are fit and evaluated on all rows;
// with K>=2 each fold is predicted from models (and spline knots) fit on the
// other folds.
inline NuisanceEstimates cross_fit(const Dataset& data, std::span<const double> predictions, LossKind loss,
                                   const NuisanceConfig& cfg) {
  NuisanceEstimates out;
  out.fold_of = assign_folds(data.source, cfg.folds, cfg.seed);
  if (cfg.fit_p) out.p_hat.assign(data.rows(), 0.0);
  if (cfg.fit_h) out.h_hat.assign(data.rows(), 0.0);

  for (int f = 0; f < cfg.folds; ++f) {
    std::vector<std::size_t> train;
    std::vector<std::size_t> eval;
    for (std::size_t i = 0; i < data.rows(); ++i) {
      if (cfg.folds == 1) {
        train.push_back(i);
        eval.push_back(i);
      } else {
        (out.fold_of[i] == f ? eval : train).push_back(i);
      }
    }
    if (cfg.fit_p) {
      auto p = fit_p_on(data, train, eval, cfg.p_map, cfg.survey_weighted, cfg.epsilon, cfg.irls);
      for (std::size_t k = 0; k < eval.size(); ++k) out.p_hat[eval[k]] = p.p_hat[k];
      out.truncation_count += p.truncation_count;
      p.diagnostic.fold = f;
      out.diagnostics.push_back(p.diagnostic);
    }
    if (cfg.fit_h) {
      auto h = fit_h_on(data, predictions, loss, train, eval, cfg.h_map, cfg.h_strategy, cfg.irls);
      for (std::size_t k = 0; k < eval.size(); ++k) out.h_hat[eval[k]] = h.h_hat[k];
      h.diagnostic.fold = f;
      out.diagnostics.push_back(h.diagnostic);
    }
  }
  return out;
}

inline std::string describe(const NuisanceEstimates& ne, const NuisanceConfig& cfg) {
  std::ostringstream os;
  os << cfg.describe() << ";truncated=" << ne.truncation_count << ";converged=" << (ne.all_converged() ? "yes" : "no");
  for (const auto& d : ne.diagnostics) {
    if (d.ridge > 0.0) os << ";" << d.name << "[" << d.fold << "].ridge=" << d.ridge;
  }
  return os.str();
}

}  // namespace shiftrisk
