#pragma once

// Monte Carlo harness for the covariate-shift risk estimators.
//
// Scenario: X ~ N(0, S) with S_ij = rho^|i-j|; D and Y are independent
// Bernoulli draws given X with the same logit
//     a + b * sum_{i<=k} X_i + c * sum_{i<=k} X_i^2
// over the first k covariates. The source rows are split into a training
// part (used to fit a main-effects logistic prediction model g) and a test
// part; every estimator is evaluated on test + target rows and compared with
// the numerically computed target risk of g.
//
// Also hosts the semi-synthetic experiment that assigns source membership
// to a fully labeled dataset and compares the estimators with the target
// outcome mean (the oracle).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shiftrisk/core.hpp"
#include "shiftrisk/estimators.hpp"
#include "shiftrisk/features.hpp"
#include "shiftrisk/inference.hpp"
#include "shiftrisk/logistic.hpp"
#include "shiftrisk/nuisance.hpp"
#include "shiftrisk/parallel.hpp"
#include "shiftrisk/pipeline.hpp"
#include "shiftrisk/rng.hpp"

namespace shiftrisk {

// ---------------------------------------------------------------------------
// Arms
// ---------------------------------------------------------------------------

enum class Arm { naive, w_corr, w_miss, cl_corr, cl_miss, dr_corr, dr_miss_p, dr_miss_h, dr_miss_both, dr_gam };

struct ArmInfo {
  Arm arm;
  const char* key;
  const char* label;
  Method method;
  std::optional<FeatureKind> p_map;
  std::optional<FeatureKind> h_map;
};

inline const std::vector<ArmInfo>& all_arms() {
  using F = FeatureKind;
  static const std::vector<ArmInfo> arms{
      {Arm::naive, "naive", "Naive", Method::naive, std::nullopt, std::nullopt},
      {Arm::w_corr, "w-corr", "W Corr", Method::iw, F::quadratic, std::nullopt},
      {Arm::w_miss, "w-miss", "W Miss", Method::iw, F::linear, std::nullopt},
      {Arm::cl_corr, "cl-corr", "CL Corr", Method::cl, std::nullopt, F::quadratic},
      {Arm::cl_miss, "cl-miss", "CL Miss", Method::cl, std::nullopt, F::linear},
      {Arm::dr_corr, "dr-corr", "DR Corr", Method::dr, F::quadratic, F::quadratic},
      {Arm::dr_miss_p, "dr-miss-p", "DR Miss p", Method::dr, F::linear, F::quadratic},
      {Arm::dr_miss_h, "dr-miss-h", "DR Miss h", Method::dr, F::quadratic, F::linear},
      {Arm::dr_miss_both, "dr-miss-both", "DR Miss Both", Method::dr, F::linear, F::linear},
      {Arm::dr_gam, "dr-gam", "DR GAM", Method::dr, F::spline, F::spline},
  };
  return arms;
}

inline const ArmInfo& arm_info(Arm a) {
  for (const auto& info : all_arms()) {
    if (info.arm == a) return info;
  }
  throw Error(ErrorKind::invalid_argument, "unknown arm");
}

inline Arm parse_arm(const std::string& key) {
  for (const auto& info : all_arms()) {
    if (key == info.key) return info.arm;
  }
  throw Error(ErrorKind::invalid_argument, "unknown arm '" + key + "'");
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

struct LogitSpec {
  double intercept = -0.3;
  double linear = 0.2;
  double quadratic = 0.3;
};

struct ScenarioSpec {
  int n_total = 1000;
  int dim = 10;
  double correlation = 0.5;
  int active = 3;  // covariates entering the selection and outcome logits
  LogitSpec selection{};
  LogitSpec outcome{};
  double train_fraction = 2.0 / 3.0;
  int replications = 1000;
  std::uint64_t seed = 20240601;
  int truth_draws = 100000;  // target draws per replicate; 0 skips the truth
  double epsilon = 1e-4;
  FeatureMap spline = FeatureMap::spline();
  std::vector<Arm> arms = default_arms();
  bool sandwich = true;  // record the DR Corr sandwich SE per replicate
  int threads = 0;

  static std::vector<Arm> default_arms() {
    std::vector<Arm> a;
    for (const auto& info : all_arms()) a.push_back(info.arm);
    return a;
  }

  Eigen::MatrixXd covariance() const {
    Eigen::MatrixXd s(dim, dim);
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) s(i, j) = std::pow(correlation, std::abs(i - j));
    }
    return s;
  }

  std::vector<std::string> covariate_names() const {
    std::vector<std::string> names;
    for (int j = 1; j <= dim; ++j) names.push_back("X" + std::to_string(j));
    return names;
  }

  void validate() const {
    if (n_total < 10) throw Error(ErrorKind::invalid_argument, "n_total must be at least 10");
    if (dim < 1 || active < 0 || active > dim) throw Error(ErrorKind::invalid_argument, "need 0 <= active <= dim");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
      throw Error(ErrorKind::invalid_argument, "train_fraction must lie in (0, 1)");
    }
    if (replications < 1) throw Error(ErrorKind::invalid_argument, "replications must be >= 1");
    if (truth_draws < 0) throw Error(ErrorKind::invalid_argument, "truth_draws must be >= 0");
    if (!(correlation > -1.0 && correlation < 1.0)) throw Error(ErrorKind::invalid_argument, "correlation must lie in (-1, 1)");
    if (!(epsilon >= 0.0 && epsilon < 0.5)) throw Error(ErrorKind::invalid_argument, "epsilon must lie in [0, 0.5)");
    if (arms.empty()) throw Error(ErrorKind::invalid_argument, "no arms selected");
    spline.validate();
  }
};

inline double logit_value(const LogitSpec& s, std::span<const double> x, int active) {
  double lin = 0.0;
  double quad = 0.0;
  for (int i = 0; i < active; ++i) {
    lin += x[static_cast<std::size_t>(i)];
    quad += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
  }
  return s.intercept + s.linear * lin + s.quadratic * quad;
}

inline double selection_prob(const ScenarioSpec& spec, std::span<const double> x) {
  return expit(logit_value(spec.selection, x, spec.active));
}

inline double outcome_prob(const ScenarioSpec& spec, std::span<const double> x) {
  return expit(logit_value(spec.outcome, x, spec.active));
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

inline Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& covariance) {
  if (covariance.rows() != covariance.cols() || !covariance.isApprox(covariance.transpose())) {
    throw Error(ErrorKind::not_spd, "covariance must be square and symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::not_spd, "covariance is not positive definite");
  return llt.matrixL();
}

// Rows are i.i.d. N(0, covariance): L z with L the Cholesky factor and z
// standard normal, drawn row by row.
inline Eigen::MatrixXd sample_mvn(int n, const Eigen::MatrixXd& covariance, Philox4x32& rng) {
  const Eigen::MatrixXd l = cholesky_factor(covariance);
  const auto d = l.rows();
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd z(d);
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) z(j) = rng.normal();
    x.row(i) = (l.triangularView<Eigen::Lower>() * z).transpose();
  }
  return x;
}

// One scenario dataset; outcomes are kept on every row (target outcomes are
// only read by the truth and oracle paths).
inline Dataset dgp_draw(const ScenarioSpec& spec, Philox4x32& rng) {
  spec.validate();
  Dataset ds = make_dataset(spec.covariate_names(), sample_mvn(spec.n_total, spec.covariance(), rng), {}, {});
  ds.source.resize(static_cast<std::size_t>(spec.n_total));
  ds.outcome.resize(static_cast<std::size_t>(spec.n_total));
  ds.weight.assign(static_cast<std::size_t>(spec.n_total), 1.0);
  std::vector<double> row(static_cast<std::size_t>(spec.dim));
  for (int i = 0; i < spec.n_total; ++i) {
    for (int j = 0; j < spec.dim; ++j) row[static_cast<std::size_t>(j)] = ds.covariates(i, j);
    ds.source[static_cast<std::size_t>(i)] = rng.bernoulli(selection_prob(spec, row)) ? 1 : 0;
    ds.outcome[static_cast<std::size_t>(i)] = rng.bernoulli(outcome_prob(spec, row)) ? 1.0 : 0.0;
  }
  return ds;
}

// Monte Carlo Pr[D=1] from `draws` covariate vectors.
inline double source_fraction(const ScenarioSpec& spec, long draws, std::uint64_t seed) {
  auto rng = make_stream(seed, 0, Purpose::selection);
  const Eigen::MatrixXd l = cholesky_factor(spec.covariance());
  const auto k = static_cast<Eigen::Index>(spec.active);
  std::vector<double> x(static_cast<std::size_t>(k));
  Eigen::VectorXd z(k);
  long hits = 0;
  for (long t = 0; t < draws; ++t) {
    for (Eigen::Index j = 0; j < k; ++j) z(j) = rng.normal();
    for (Eigen::Index i = 0; i < k; ++i) x[static_cast<std::size_t>(i)] = l.row(i).head(i + 1).dot(z.head(i + 1));
    hits += rng.bernoulli(selection_prob(spec, x));
  }
  return static_cast<double>(hits) / static_cast<double>(draws);
}

// E[(Y - g(X))^2 | D=0] by Monte Carlo: target covariates by rejection on the
// selection probability, then the analytic conditional Brier risk
// q(1-2g) + g^2. The Cholesky factor is lower triangular, so the first
// `active` coordinates (all that selection depends on) are drawn first and
// the rest only for accepted draws.
inline double compute_truth(const ScenarioSpec& spec, const std::function<double(std::span<const double>)>& g,
                            int draws, Philox4x32& rng) {
  if (draws <= 0) throw Error(ErrorKind::invalid_argument, "truth needs a positive number of draws");
  const Eigen::MatrixXd l = cholesky_factor(spec.covariance());
  const auto d = l.rows();
  const auto k = static_cast<Eigen::Index>(spec.active);
  Eigen::VectorXd z(d);
  std::vector<double> x(static_cast<std::size_t>(d));
  double sum = 0.0;
  for (int accepted = 0; accepted < draws;) {
    for (Eigen::Index j = 0; j < k; ++j) z(j) = rng.normal();
    for (Eigen::Index i = 0; i < k; ++i) x[static_cast<std::size_t>(i)] = l.row(i).head(i + 1).dot(z.head(i + 1));
    if (rng.bernoulli(selection_prob(spec, x))) continue;  // landed in the source
    for (Eigen::Index j = k; j < d; ++j) z(j) = rng.normal();
    for (Eigen::Index i = k; i < d; ++i) x[static_cast<std::size_t>(i)] = l.row(i).head(i + 1).dot(z.head(i + 1));
    sum += h_from_outcome_prob(outcome_prob(spec, x), g(x));
    ++accepted;
  }
  return sum / draws;
}

// ---------------------------------------------------------------------------
// One replicate
// ---------------------------------------------------------------------------

struct ReplicateData {
  Dataset full;
  Dataset eval;                   // source test rows + target rows
  std::vector<double> predictions;  // g on eval rows
  std::vector<double> g_coefficients;
  std::size_t n_train = 0;
};

// Main-effects logistic model of Y on every covariate over the given rows.
inline std::vector<double> fit_main_effects(const Dataset& data, std::span<const std::size_t> rows) {
  std::vector<double> y;
  for (auto i : rows) y.push_back(data.outcome[i]);
  const std::vector<double> unit(rows.size(), 1.0);
  const auto x = detail::take_rows(data.covariates, rows);
  const auto fit = fit_logistic_irls(Design::fit(FeatureMap::linear(), x).transform(x), y, unit);
  return {fit.coefficients.data(), fit.coefficients.data() + fit.coefficients.size()};
}

// Splits source rows into train/test with a stream keyed on (seed, index)
// and fits g on the training rows.
inline ReplicateData split_and_fit(Dataset full, double train_fraction, std::uint64_t seed, std::uint64_t index) {
  ReplicateData rd;
  rd.full = std::move(full);
  std::vector<std::size_t> src;
  for (std::size_t i = 0; i < rd.full.rows(); ++i) {
    if (rd.full.source[i] == 1) src.push_back(i);
  }
  auto rng = make_stream(seed, index, Purpose::split);
  shuffle(src, rng);
  rd.n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(src.size())));
  if (rd.n_train == 0 || rd.n_train >= src.size()) {
    throw Error(ErrorKind::empty_source, "source sample too small to split into train and test");
  }
  std::vector<std::size_t> train(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(rd.n_train));
  std::vector<bool> is_train(rd.full.rows(), false);
  for (auto i : train) is_train[i] = true;
  std::sort(train.begin(), train.end());
  rd.g_coefficients = fit_main_effects(rd.full, train);

  std::vector<std::size_t> eval;
  for (std::size_t i = 0; i < rd.full.rows(); ++i) {
    if (!is_train[i]) eval.push_back(i);
  }
  rd.eval = rd.full.subset(eval);
  const auto g = logistic_model(rd.full.covariate_names, rd.g_coefficients);
  rd.predictions = select_model_inputs(rd.eval, g);
  return rd;
}

inline ReplicateData make_replicate(const ScenarioSpec& spec, std::uint64_t r) {
  auto rng = make_stream(spec.seed, r, Purpose::data);
  return split_and_fit(dgp_draw(spec, rng), spec.train_fraction, spec.seed, r);
}

struct ReplicateOutcome {
  std::vector<double> estimates;  // one per spec.arms entry
  double truth = std::numeric_limits<double>::quiet_NaN();
  double dr_corr_se = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_eval = 0;
  std::size_t truncations = 0;
  std::string error;  // non-empty when the replicate failed
};

inline ReplicateOutcome run_replicate(const ScenarioSpec& spec, std::uint64_t r) {
  ReplicateOutcome out;
  const auto rd = make_replicate(spec, r);
  const auto& ev = rd.eval;
  out.n_eval = ev.rows();
  const auto losses = compute_losses(ev, rd.predictions, LossKind::squared);

  auto map_for = [&](FeatureKind k) {
    if (k == FeatureKind::spline) return spec.spline;
    return FeatureMap{k};
  };
  std::map<FeatureKind, std::vector<double>> p_cache;
  std::map<FeatureKind, std::vector<double>> h_cache;
  auto p_of = [&](FeatureKind k) -> const std::vector<double>& {
    auto it = p_cache.find(k);
    if (it == p_cache.end()) {
      auto p = fit_p(ev, map_for(k), false, spec.epsilon);
      out.truncations += p.truncation_count;
      it = p_cache.emplace(k, std::move(p.p_hat)).first;
    }
    return it->second;
  };
  auto h_of = [&](FeatureKind k) -> const std::vector<double>& {
    auto it = h_cache.find(k);
    if (it == h_cache.end()) {
      it = h_cache.emplace(k, fit_h(ev, rd.predictions, LossKind::squared, map_for(k), HStrategy::binary).h_hat).first;
    }
    return it->second;
  };

  for (auto a : spec.arms) {
    const auto& info = arm_info(a);
    EstimatorInput in{ev.source, losses, {}, {}, ev.weight};
    if (info.p_map) in.p_hat = p_of(*info.p_map);
    if (info.h_map) in.h_hat = h_of(*info.h_map);
    const double est = estimate(info.method, in);
    out.estimates.push_back(est);
    if (a == Arm::dr_corr && spec.sandwich) out.dr_corr_se = sandwich_se(eif_values(in, est));
  }

  if (spec.truth_draws > 0) {
    const auto g = logistic_model(rd.full.covariate_names, rd.g_coefficients);
    auto rng = make_stream(spec.seed, r, Purpose::truth);
    out.truth = compute_truth(spec, [&](std::span<const double> x) { return g(x); }, spec.truth_draws, rng);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

struct SummaryRow {
  std::string arm;
  double avg_estimate = 0.0;
  double sqrt_n_bias = 0.0;
  double sqrt_n_sd = 0.0;
  double rel_bias = 0.0;  // fraction; CSV output reports percent
  std::size_t replicates = 0;
};

// Average, sqrt(n) x bias, sqrt(n) x SD across replicates and relative bias
// (average - truth) / truth; n is the evaluation-set size.
inline SummaryRow summarize(const std::string& arm, const std::vector<double>& estimates, double truth,
                            double n_eval) {
  if (estimates.size() < 2) throw Error(ErrorKind::invalid_argument, "summaries need at least two replicates");
  SummaryRow row;
  row.arm = arm;
  row.replicates = estimates.size();
  row.avg_estimate = std::accumulate(estimates.begin(), estimates.end(), 0.0) / static_cast<double>(estimates.size());
  const double root_n = std::sqrt(n_eval);
  row.sqrt_n_bias = root_n * (row.avg_estimate - truth);
  row.sqrt_n_sd = root_n * sample_sd(estimates);
  row.rel_bias = (row.avg_estimate - truth) / truth;
  return row;
}

struct SimulationResult {
  std::vector<Arm> arms;
  std::vector<ReplicateOutcome> replicates;  // replicate order; failed ones carry an error
  std::size_t failures = 0;
  double truth = std::numeric_limits<double>::quiet_NaN();
  double mean_n_eval = 0.0;
  std::vector<SummaryRow> summary;

  std::vector<double> estimates(Arm a) const {
    const auto pos = static_cast<std::size_t>(std::find(arms.begin(), arms.end(), a) - arms.begin());
    if (pos >= arms.size()) throw Error(ErrorKind::invalid_argument, "arm not part of this run");
    std::vector<double> v;
    for (const auto& r : replicates) {
      if (r.error.empty()) v.push_back(r.estimates[pos]);
    }
    return v;
  }
};

// All replicates of a scenario. Replicate r uses only streams keyed on
// (seed, r), and outcomes are reduced in replicate order, so the result does
// not depend on the thread count. More than 1% failed replicates is an error.
inline SimulationResult run_simulation_study(const ScenarioSpec& spec) {
  spec.validate();
  SimulationResult res;
  res.arms = spec.arms;
  const auto R = static_cast<std::size_t>(spec.replications);
  res.replicates.resize(R);
  parallel_for(R, spec.threads, [&](std::size_t r) {
    try {
      res.replicates[r] = run_replicate(spec, r);
    } catch (const Error& e) {
      res.replicates[r] = {};
      res.replicates[r].error = e.what();
    }
  });

  double truth_sum = 0.0;
  double n_sum = 0.0;
  for (const auto& r : res.replicates) {
    if (!r.error.empty()) {
      ++res.failures;
      continue;
    }
    truth_sum += r.truth;
    n_sum += static_cast<double>(r.n_eval);
  }
  if (static_cast<double>(res.failures) > 0.01 * static_cast<double>(R)) {
    std::string first;
    for (const auto& r : res.replicates) {
      if (!r.error.empty()) {
        first = r.error;
        break;
      }
    }
    throw Error(ErrorKind::replicate_failure,
                std::to_string(res.failures) + " of " + std::to_string(R) + " replicates failed; first: " + first);
  }
  const double ok = static_cast<double>(R - res.failures);
  res.truth = truth_sum / ok;
  res.mean_n_eval = n_sum / ok;
  if (R - res.failures >= 2) {
    for (auto a : spec.arms) res.summary.push_back(summarize(arm_info(a).label, res.estimates(a), res.truth, res.mean_n_eval));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Semi-synthetic split experiment
// ---------------------------------------------------------------------------

enum class SplitMode { uniform, shifted };

inline const char* to_string(SplitMode m) { return m == SplitMode::uniform ? "uniform" : "shifted"; }

inline SplitMode parse_split_mode(const std::string& s) {
  if (s == "uniform") return SplitMode::uniform;
  if (s == "shifted") return SplitMode::shifted;
  throw Error(ErrorKind::invalid_argument, "unknown split mode '" + s + "'");
}

// Selection slopes +m for covariates positively associated with the outcome
// (main-effects logistic fit on all rows), -m otherwise; intercept 0.
inline std::vector<double> shift_coefficients(const Dataset& labeled, double magnitude) {
  const auto beta = fit_main_effects(labeled, all_rows(labeled.rows()));
  std::vector<double> c(labeled.dim());
  for (std::size_t j = 0; j < c.size(); ++j) c[j] = beta[j + 1] > 0.0 ? magnitude : -magnitude;
  return c;
}

// Assigns D to every row of a labeled dataset: Bernoulli(0.5) when
// `slopes` is empty, else Bernoulli(expit(slopes . x)). Outcomes are kept.
inline Dataset assign_source(const Dataset& labeled, std::span<const double> slopes, std::uint64_t seed,
                             std::uint64_t split) {
  Dataset ds = labeled;
  ds.weight.assign(ds.rows(), 1.0);
  auto rng = make_stream(seed, split, Purpose::selection);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    double p = 0.5;
    if (!slopes.empty()) {
      double z = 0.0;
      for (std::size_t j = 0; j < slopes.size(); ++j) z += slopes[j] * ds.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      p = expit(z);
    }
    ds.source[i] = rng.bernoulli(p) ? 1 : 0;
  }
  return ds;
}

inline Dataset semi_synthetic_split(const Dataset& labeled, SplitMode mode, double magnitude, std::uint64_t seed,
                                    std::uint64_t split = 0) {
  for (std::size_t i = 0; i < labeled.rows(); ++i) {
    if (!labeled.has_outcome(i)) throw Error(ErrorKind::validation, "semi-synthetic splits need every outcome");
  }
  std::vector<double> slopes;
  if (mode == SplitMode::shifted) slopes = shift_coefficients(labeled, magnitude);
  return assign_source(labeled, slopes, seed, split);
}

struct SplitEvalConfig {
  int splits = 1000;
  SplitMode mode = SplitMode::shifted;
  double magnitude = 0.05;
  double train_fraction = 2.0 / 3.0;
  std::uint64_t seed = 1;
  double epsilon = 1e-4;
  int bootstrap = 0;  // replicates per split for the average bootstrap SE; 0 = off
  int threads = 0;
};

struct SplitEvalRow {
  std::string estimator;
  double mean_estimate = 0.0;
  double bias = 0.0;     // mean(estimate - oracle)
  double mc_se = 0.0;    // sd(estimate - oracle) / sqrt(splits)
  double sd = 0.0;       // sd of the estimates across splits
  double mean_boot_se = std::numeric_limits<double>::quiet_NaN();
};

struct SplitEvalResult {
  std::vector<Method> methods{Method::naive, Method::iw, Method::cl, Method::dr, Method::oracle};
  std::vector<std::vector<double>> estimates;  // [split][method]
  std::vector<std::vector<double>> boot_se;    // [split][method], empty when off
  std::size_t failures = 0;
  std::vector<SplitEvalRow> rows;
};

inline SplitEvalResult split_eval(const Dataset& labeled, const SplitEvalConfig& cfg) {
  if (cfg.splits < 1) throw Error(ErrorKind::invalid_argument, "need at least one split");
  for (std::size_t i = 0; i < labeled.rows(); ++i) {
    if (!labeled.has_outcome(i)) throw Error(ErrorKind::validation, "split-eval needs every outcome");
  }
  bool binary = true;
  for (double y : labeled.outcome) binary &= (y == 0.0 || y == 1.0);

  std::vector<double> slopes;
  if (cfg.mode == SplitMode::shifted) slopes = shift_coefficients(labeled, cfg.magnitude);

  SplitEvalResult res;
  const auto S = static_cast<std::size_t>(cfg.splits);
  const auto k = res.methods.size();
  std::vector<std::vector<double>> est(S);
  std::vector<std::vector<double>> se(S);
  std::vector<std::string> errors(S);

  PipelineConfig pcfg;
  pcfg.loss = LossKind::squared;
  pcfg.methods = res.methods;
  pcfg.nuisance.p_map = FeatureMap::linear();
  pcfg.nuisance.h_map = FeatureMap::linear();
  pcfg.nuisance.h_strategy = binary ? HStrategy::binary : HStrategy::direct;
  pcfg.nuisance.epsilon = cfg.epsilon;

  parallel_for(S, cfg.threads, [&](std::size_t s) {
    try {
      const auto rd = split_and_fit(assign_source(labeled, slopes, cfg.seed, s), cfg.train_fraction, cfg.seed, s);
      Dataset ev = rd.eval;
      ev.ghat = rd.predictions;
      const auto result = run_pipeline(ev, std::nullopt, pcfg);
      est[s] = result.estimates;
      if (cfg.bootstrap > 0) {
        BootstrapPlan plan;
        plan.replicates = cfg.bootstrap;
        plan.seed = cfg.seed ^ (0x9E3779B97F4A7C15ull * (s + 1));
        plan.threads = 1;
        const auto boot = bootstrap(ev, pipeline_builder(std::nullopt, pcfg), result.estimates, plan);
        for (const auto& c : boot.components) se[s].push_back(c.se);
      }
    } catch (const Error& e) {
      est[s].clear();
      errors[s] = e.what();
    }
  });

  for (std::size_t s = 0; s < S; ++s) {
    if (est[s].empty()) {
      ++res.failures;
      continue;
    }
    res.estimates.push_back(est[s]);
    if (cfg.bootstrap > 0) res.boot_se.push_back(se[s]);
  }
  if (static_cast<double>(res.failures) > 0.01 * static_cast<double>(S)) {
    std::string first;
    for (const auto& e : errors) {
      if (!e.empty()) {
        first = e;
        break;
      }
    }
    throw Error(ErrorKind::replicate_failure,
                std::to_string(res.failures) + " of " + std::to_string(S) + " splits failed; first: " + first);
  }

  const auto ok = res.estimates.size();
  const std::size_t oracle_pos = k - 1;
  for (std::size_t m = 0; m < k; ++m) {
    SplitEvalRow row;
    row.estimator = to_string(res.methods[m]);
    std::vector<double> vals;
    std::vector<double> diffs;
    for (const auto& e : res.estimates) {
      vals.push_back(e[m]);
      diffs.push_back(e[m] - e[oracle_pos]);
    }
    row.mean_estimate = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(ok);
    row.bias = std::accumulate(diffs.begin(), diffs.end(), 0.0) / static_cast<double>(ok);
    row.sd = sample_sd(vals);
    row.mc_se = sample_sd(diffs) / std::sqrt(static_cast<double>(ok));
    if (!res.boot_se.empty()) {
      double t = 0.0;
      for (const auto& v : res.boot_se) t += v[m];
      row.mean_boot_se = t / static_cast<double>(res.boot_se.size());
    }
    res.rows.push_back(row);
  }
  return res;
}

// A fully labeled cohort with screening-study-like covariates on their
// natural scales and a main-effects logistic outcome (prevalence near 27%).
inline Dataset synthetic_cohort(int n, std::uint64_t seed) {
  auto rng = make_stream(seed, 0, Purpose::data);
  const std::vector<std::string> names{"age_c", "pack_years_c", "bmi_c", "years_smoked_c",
                                       "current_smoker", "education", "family_history", "emphysema"};
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(names.size()));
  std::vector<double> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double age = 5.0 * rng.normal();
    const double pack = 12.0 * rng.normal();
    const double bmi = 4.0 * rng.normal();
    const double years = 0.5 * age + 5.0 * rng.normal();
    const double current = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double edu = static_cast<double>(rng.below(4));
    const double family = rng.bernoulli(0.2) ? 1.0 : 0.0;
    const double emph = rng.bernoulli(0.1) ? 1.0 : 0.0;
    x.row(i) << age, pack, bmi, years, current, edu, family, emph;
    const double z = -1.3 + 0.05 * age + 0.03 * pack - 0.04 * bmi + 0.03 * years + 0.3 * current - 0.15 * edu +
                     0.35 * family + 0.5 * emph;
    y[static_cast<std::size_t>(i)] = rng.bernoulli(expit(z)) ? 1.0 : 0.0;
  }
  Dataset ds = make_dataset(names, std::move(x), std::vector<std::uint8_t>(static_cast<std::size_t>(n), 1), std::move(y));
  return ds;
}

}  // namespace shiftrisk
