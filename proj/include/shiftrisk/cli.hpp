#pragma once

// Command-line front end. run_cli() is the whole program minus main(), so it
// can be driven in-process. Exit codes: 0 success, 1 usage error, 2 data
// validation, 3 numerical failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "shiftrisk/core.hpp"
#include "shiftrisk/inference.hpp"
#include "shiftrisk/io.hpp"
#include "shiftrisk/pipeline.hpp"
#include "shiftrisk/simulation.hpp"

namespace shiftrisk::cli {

enum ExitCode { kOk = 0, kUsage = 1, kInvalidData = 2, kNumerical = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

inline LossKind parse_loss(const std::string& s) {
  if (s == "brier" || s == "squared") return LossKind::squared;
  if (s == "absolute") return LossKind::absolute;
  throw UsageError("unknown loss '" + s + "'");
}

inline const char* loss_name(LossKind k) { return k == LossKind::squared ? "brier" : "absolute"; }

// Writes to the --out path, or to `fallback` when no path was given.
template <class F>
void emit(const std::string& path, std::ostream& fallback, F&& write) {
  if (path.empty()) {
    write(fallback);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::io, "cannot write '" + path + "'");
  write(f);
  if (!f) throw Error(ErrorKind::io, "write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

struct EstimateArgs {
  std::string data;
  std::string model;
  std::string ghat_col = "GHAT";
  std::string loss = "brier";
  std::string estimator = "all";
  std::string p_map = "quadratic";
  std::string h_map = "quadratic";
  std::string h_strategy = "binary";
  int folds = 1;
  double epsilon = 1e-4;
  bool survey = false;
  int boot = 0;
  std::string boot_unit = "row";
  std::string ci = "percentile";
  std::string boot_refit = "on";
  bool sandwich = false;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out;
  std::string boot_out;
};

inline void add_estimate_options(CLI::App& sub, EstimateArgs& a) {
  sub.add_option("--data", a.data, "input CSV (header row; reserved columns D, Y, W, CLUSTER, STRATUM)")->required();
  sub.add_option("--model", a.model, "model file written by model-fit");
  sub.add_option("--ghat-col", a.ghat_col, "column holding precomputed predictions")->capture_default_str();
  sub.add_option("--loss", a.loss, "loss function")->check(CLI::IsMember({"brier", "absolute"}))->capture_default_str();
  sub.add_option("--estimator", a.estimator, "naive, cl, iw, dr, oracle, all, or a comma list")->capture_default_str();
  sub.add_option("--p-map", a.p_map, "feature map for p")
      ->check(CLI::IsMember({"linear", "quadratic", "spline"}))
      ->capture_default_str();
  sub.add_option("--h-map", a.h_map, "feature map for h")
      ->check(CLI::IsMember({"linear", "quadratic", "spline"}))
      ->capture_default_str();
  sub.add_option("--h-strategy", a.h_strategy, "how h is fit")
      ->check(CLI::IsMember({"binary", "direct"}))
      ->capture_default_str();
  sub.add_option("--folds", a.folds, "cross-fitting folds (1 = off)")->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_option("--epsilon", a.epsilon, "truncation bound for p")->capture_default_str();
  sub.add_flag("--survey", a.survey, "survey-weighted estimators (needs a W column)");
  sub.add_option("--boot", a.boot, "bootstrap replicates (0 = off)")->check(CLI::NonNegativeNumber)->capture_default_str();
  sub.add_option("--boot-unit", a.boot_unit, "resampling unit")->check(CLI::IsMember({"row", "cluster"}))->capture_default_str();
  sub.add_option("--ci", a.ci, "interval type")->check(CLI::IsMember({"percentile", "normal"}))->capture_default_str();
  sub.add_option("--boot-refit", a.boot_refit, "refit nuisances per replicate")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  sub.add_flag("--sandwich", a.sandwich, "also report the influence-function SE for dr (unweighted only)");
  sub.add_option("--seed", a.seed, "seed for folds and bootstrap")->capture_default_str();
  sub.add_option("--threads", a.threads, "worker threads (0 = auto)")->check(CLI::NonNegativeNumber)->capture_default_str();
  sub.add_option("--out", a.out, "report path (default: stdout)");
  sub.add_option("--boot-out", a.boot_out, "CSV of bootstrap replicate estimates");
}

inline std::vector<Method> resolve_methods(const std::string& spec, const Dataset& data) {
  std::vector<Method> methods;
  for (const auto& tok : split_list(spec)) {
    if (tok == "all") {
      for (auto m : {Method::naive, Method::cl, Method::iw, Method::dr}) methods.push_back(m);
      bool labeled = true;
      for (std::size_t i = 0; i < data.rows(); ++i) labeled &= data.has_outcome(i);
      if (labeled) methods.push_back(Method::oracle);
      continue;
    }
    try {
      methods.push_back(parse_method(tok));
    } catch (const Error&) {
      throw UsageError("unknown estimator '" + tok + "'");
    }
  }
  if (methods.empty()) throw UsageError("no estimator selected");
  std::vector<Method> unique;
  for (auto m : methods) {
    if (std::find(unique.begin(), unique.end(), m) == unique.end()) unique.push_back(m);
  }
  return unique;
}

inline void echo_config(Report& r, const EstimateArgs& a) {
  r.set("config.data", a.data);
  r.set("config.model", a.model.empty() ? "(none)" : a.model);
  r.set("config.ghat_col", a.ghat_col);
  r.set("config.loss", a.loss);
  r.set("config.estimator", a.estimator);
  r.set("config.p_map", a.p_map);
  r.set("config.h_map", a.h_map);
  r.set("config.h_strategy", a.h_strategy);
  r.set("config.folds", a.folds);
  r.set("config.epsilon", a.epsilon);
  r.set("config.survey", a.survey ? "on" : "off");
  r.set("config.boot", a.boot);
  r.set("config.boot_unit", a.boot_unit);
  r.set("config.ci", a.ci);
  r.set("config.boot_refit", a.boot_refit);
  r.set("config.sandwich", a.sandwich ? "on" : "off");
  r.set("config.seed", std::to_string(a.seed));
}

inline int cmd_estimate(const EstimateArgs& a, std::ostream& out, std::ostream& err) {
  Report rep;
  rep.set("schema_version", kSchemaVersion);
  rep.set("command", "estimate");
  echo_config(rep, a);

  CsvOptions copt;
  copt.ghat_column = a.model.empty() ? a.ghat_col : std::string();
  auto csv = read_dataset_csv(a.data, copt);
  Dataset& data = csv.data;

  if (a.survey && !csv.has_weight_column) throw UsageError("--survey requires a W column");
  if (a.boot > 0 && a.boot_unit == "cluster" && !data.has_clusters()) {
    throw UsageError("--boot-unit cluster requires a CLUSTER column");
  }
  if (a.model.empty() && data.ghat.empty()) {
    throw UsageError("no predictions: pass --model or provide a '" + a.ghat_col + "' column");
  }
  if (!(a.epsilon >= 0.0 && a.epsilon < 0.5)) throw UsageError("--epsilon must lie in [0, 0.5)");
  if (a.boot == 1) throw UsageError("--boot needs 0 or at least 2 replicates");

  const auto methods = resolve_methods(a.estimator, data);
  const bool want_oracle = std::find(methods.begin(), methods.end(), Method::oracle) != methods.end();

  std::vector<Violation> violations = validate_dataset(data, want_oracle ? ValidationMode::oracle : ValidationMode::estimate);
  if (a.survey) {
    for (auto& v : validate_dataset(data, ValidationMode::survey_estimate)) {
      if (v.rule == "source-weight") violations.push_back(v);
    }
  }
  for (std::size_t i = 0; i < data.ghat.size(); ++i) {
    if (!std::isfinite(data.ghat[i])) violations.push_back({i, "non-finite-prediction", "non-finite prediction, row " + std::to_string(i)});
  }
  if (!violations.empty()) {
    rep.set("status", "invalid");
    rep.set("violations", violations.size());
    for (std::size_t k = 0; k < violations.size(); ++k) {
      const auto& v = violations[k];
      const std::string row = v.row == kDatasetLevel ? "dataset" : std::to_string(v.row);
      rep.set("violation." + std::to_string(k), row + ":" + v.rule + ":" + v.message);
      err << "validation: [" << v.rule << "] " << v.message << '\n';
    }
    emit(a.out, out, [&](std::ostream& o) { rep.write(o); });
    return kInvalidData;
  }

  std::optional<PredictionModel> model;
  if (!a.model.empty()) {
    std::ifstream mf(a.model);
    if (!mf) throw Error(ErrorKind::io, "cannot open '" + a.model + "'");
    model = read_model_file(mf).model();
  }

  PipelineConfig cfg;
  cfg.loss = parse_loss(a.loss);
  cfg.methods = methods;
  cfg.nuisance.p_map.kind = parse_feature_kind(a.p_map);
  cfg.nuisance.h_map.kind = parse_feature_kind(a.h_map);
  try {
    cfg.nuisance.h_strategy = parse_h_strategy(a.h_strategy);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  cfg.nuisance.folds = a.folds;
  cfg.nuisance.epsilon = a.epsilon;
  cfg.nuisance.survey_weighted = a.survey;
  cfg.nuisance.seed = a.seed;
  if (!a.survey) std::fill(data.weight.begin(), data.weight.end(), 1.0);

  const auto result = run_pipeline(data, model, cfg);
  const auto& ne = result.nuisance;

  rep.set("status", "ok");
  rep.set("n", data.rows());
  rep.set("n0", data.n_target());
  rep.set("n1", data.n_source());
  rep.set("nuisance.p_fit", ne.p_hat.empty() ? "no" : "yes");
  rep.set("nuisance.h_fit", ne.h_hat.empty() ? "no" : "yes");
  rep.set("nuisance.truncation_count", ne.truncation_count);
  rep.set("nuisance.converged", ne.all_converged() ? "yes" : "no");
  for (const auto& d : ne.diagnostics) {
    const std::string key = "nuisance." + d.name + "." + std::to_string(d.fold);
    rep.set(key + ".converged", d.converged ? "yes" : "no");
    rep.set(key + ".iterations", d.iterations);
    rep.set(key + ".ridge", d.ridge);
  }
  if (!ne.all_converged()) err << "warning: a nuisance fit did not converge\n";

  std::vector<EstimateReport> reports;
  for (std::size_t k = 0; k < methods.size(); ++k) {
    EstimateReport r;
    r.method = methods[k];
    r.estimate = result.estimates[k];
    r.n0 = data.n_target();
    r.n1 = data.n_source();
    reports.push_back(r);
  }

  if (a.sandwich) {
    if (a.survey) throw UsageError("--sandwich is available for unweighted estimation only");
    const auto pos = std::find(methods.begin(), methods.end(), Method::dr) - methods.begin();
    if (static_cast<std::size_t>(pos) == methods.size()) throw UsageError("--sandwich needs the dr estimator");
    const auto in = make_input(data, result.losses, ne);
    rep.set("dr.sandwich_se", sandwich_se(eif_values(in, result.estimates[static_cast<std::size_t>(pos)])));
  }

  std::vector<std::string> warnings;
  if (a.boot > 0) {
    BootstrapPlan plan;
    plan.replicates = a.boot;
    plan.unit = a.boot_unit == "cluster" ? ResampleUnit::cluster : ResampleUnit::row;
    plan.ci = a.ci == "normal" ? CiMethod::normal : CiMethod::percentile;
    plan.seed = a.seed;
    plan.threads = a.threads;
    const bool refit = a.boot_refit == "on";
    const auto boot = bootstrap(data, pipeline_builder(model, cfg, refit, ne), result.estimates, plan);
    for (std::size_t k = 0; k < reports.size(); ++k) {
      reports[k].std_error = boot.components[k].se;
      reports[k].ci_lower = boot.components[k].ci_lower;
      reports[k].ci_upper = boot.components[k].ci_upper;
      reports[k].ci_method = to_string(plan.ci);
    }
    rep.set("bootstrap.replicates", static_cast<std::size_t>(a.boot));
    rep.set("bootstrap.failures", boot.failures);
    warnings = boot.warnings;
    if (!a.boot_out.empty()) {
      emit(a.boot_out, out, [&](std::ostream& o) {
        write_config_comments(o, rep.entries());
        o << "replicate";
        for (auto m : methods) o << ',' << to_string(m);
        o << '\n';
        for (std::size_t b = 0; b < boot.components.front().estimates.size(); ++b) {
          o << b;
          for (const auto& c : boot.components) o << ',' << format_double(c.estimates[b]);
          o << '\n';
        }
      });
    }
  }

  for (const auto& r : reports) {
    const std::string m = to_string(r.method);
    rep.set(m + ".estimate", r.estimate);
    if (r.std_error) {
      rep.set(m + ".std_error", *r.std_error);
      rep.set(m + ".ci_lower", *r.ci_lower);
      rep.set(m + ".ci_upper", *r.ci_upper);
      rep.set(m + ".ci_method", r.ci_method);
    }
  }
  for (std::size_t k = 0; k < warnings.size(); ++k) {
    rep.set("warning." + std::to_string(k), warnings[k]);
    err << "warning: " << warnings[k] << '\n';
  }
  emit(a.out, out, [&](std::ostream& o) { rep.write(o); });
  return kOk;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  std::optional<int> replications;
  std::optional<int> n_total;
  std::optional<int> truth_draws;
  std::optional<std::uint64_t> seed;
  std::string arms;
  int threads = 0;
  std::string out;
  std::string raw_out;
};

inline void add_simulate_options(CLI::App& sub, SimulateArgs& a) {
  sub.add_option("--scenario", a.scenario, "JSON scenario file (defaults: the 10-covariate AR(0.5) design)");
  sub.add_option("--replications", a.replications, "number of replicates")->check(CLI::PositiveNumber);
  sub.add_option("--n-total", a.n_total, "rows drawn per replicate")->check(CLI::PositiveNumber);
  sub.add_option("--truth-draws", a.truth_draws, "target draws for the per-replicate true risk (0 = skip)")
      ->check(CLI::NonNegativeNumber);
  sub.add_option("--seed", a.seed, "master seed");
  sub.add_option("--arms", a.arms, "comma list of arms, e.g. naive,dr-corr");
  sub.add_option("--threads", a.threads, "worker threads (0 = auto)")->check(CLI::NonNegativeNumber)->capture_default_str();
  sub.add_option("--out", a.out, "summary CSV path (default: stdout)");
  sub.add_option("--raw-out", a.raw_out, "CSV of per-replicate estimates");
}

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream&) {
  ScenarioSpec spec = a.scenario.empty() ? ScenarioSpec{} : read_scenario_file(a.scenario);
  if (a.replications) spec.replications = *a.replications;
  if (a.n_total) spec.n_total = *a.n_total;
  if (a.truth_draws) spec.truth_draws = *a.truth_draws;
  if (a.seed) spec.seed = *a.seed;
  if (!a.arms.empty()) {
    spec.arms.clear();
    for (const auto& k : split_list(a.arms)) {
      try {
        spec.arms.push_back(parse_arm(k));
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
    }
  }
  spec.threads = a.threads;
  try {
    spec.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  const auto res = run_simulation_study(spec);
  std::vector<std::pair<std::string, std::string>> cfg{
      {"command", "simulate"},
      {"scenario", scenario_to_json(spec).dump()},
      {"replicates_ok", std::to_string(res.replicates.size() - res.failures)},
      {"failures", std::to_string(res.failures)},
      {"truth", format_double(res.truth)},
      {"mean_n_eval", format_double(res.mean_n_eval)},
  };
  emit(a.out, out, [&](std::ostream& o) {
    write_config_comments(o, cfg);
    write_summary_csv(o, res.summary);
  });
  if (!a.raw_out.empty()) {
    emit(a.raw_out, out, [&](std::ostream& o) {
      write_config_comments(o, cfg);
      o << "replicate,status,truth,n_eval,dr_corr_sandwich_se";
      for (auto arm : spec.arms) o << ',' << arm_info(arm).key;
      o << '\n';
      for (std::size_t r = 0; r < res.replicates.size(); ++r) {
        const auto& rr = res.replicates[r];
        o << r << ',' << (rr.error.empty() ? "ok" : "failed") << ',' << format_double(rr.truth) << ',' << rr.n_eval
          << ',' << format_double(rr.dr_corr_se);
        for (std::size_t k = 0; k < spec.arms.size(); ++k) {
          o << ',' << (rr.error.empty() ? format_double(rr.estimates[k]) : "nan");
        }
        o << '\n';
      }
    });
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// split-eval
// ---------------------------------------------------------------------------

struct SplitEvalArgs {
  std::string data;
  std::string mode = "shifted";
  double magnitude = 0.05;
  int splits = 1000;
  int boot = 0;
  double epsilon = 1e-4;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out;
};

inline void add_split_eval_options(CLI::App& sub, SplitEvalArgs& a) {
  sub.add_option("--data", a.data, "fully labeled CSV (Y on every row; D ignored)")->required();
  sub.add_option("--mode", a.mode, "split mode")->check(CLI::IsMember({"uniform", "shifted"}))->capture_default_str();
  sub.add_option("--magnitude", a.magnitude, "shift magnitude m for shifted splits")->capture_default_str();
  sub.add_option("--splits", a.splits, "number of random splits")->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_option("--boot", a.boot, "bootstrap replicates per split (0 = off)")->check(CLI::NonNegativeNumber)->capture_default_str();
  sub.add_option("--epsilon", a.epsilon, "truncation bound for p")->capture_default_str();
  sub.add_option("--seed", a.seed, "seed")->capture_default_str();
  sub.add_option("--threads", a.threads, "worker threads (0 = auto)")->check(CLI::NonNegativeNumber)->capture_default_str();
  sub.add_option("--out", a.out, "summary CSV path (default: stdout)");
}

inline int cmd_split_eval(const SplitEvalArgs& a, std::ostream& out, std::ostream& err) {
  if (a.boot == 1) throw UsageError("--boot needs 0 or at least 2 replicates");
  if (!(a.epsilon >= 0.0 && a.epsilon < 0.5)) throw UsageError("--epsilon must lie in [0, 0.5)");
  CsvOptions copt;
  copt.require_source = false;
  copt.ghat_column.clear();
  auto csv = read_dataset_csv(a.data, copt);
  Dataset& data = csv.data;
  std::fill(data.source.begin(), data.source.end(), std::uint8_t{1});
  std::fill(data.weight.begin(), data.weight.end(), 1.0);
  std::size_t bad = 0;
  for (const auto& v : validate_dataset(data, ValidationMode::oracle)) {
    if (v.rule == "empty-target") continue;
    err << "validation: [" << v.rule << "] " << v.message << '\n';
    ++bad;
  }
  if (bad > 0) return kInvalidData;

  SplitEvalConfig cfg;
  cfg.splits = a.splits;
  cfg.mode = parse_split_mode(a.mode);
  cfg.magnitude = a.magnitude;
  cfg.seed = a.seed;
  cfg.epsilon = a.epsilon;
  cfg.bootstrap = a.boot;
  cfg.threads = a.threads;
  const auto res = split_eval(data, cfg);

  std::vector<std::pair<std::string, std::string>> echo{
      {"command", "split-eval"},  {"data", a.data},
      {"mode", a.mode},           {"magnitude", format_double(a.magnitude)},
      {"splits", std::to_string(a.splits)}, {"boot", std::to_string(a.boot)},
      {"epsilon", format_double(a.epsilon)}, {"seed", std::to_string(a.seed)},
      {"failures", std::to_string(res.failures)},
  };
  emit(a.out, out, [&](std::ostream& o) {
    write_config_comments(o, echo);
    o << "estimator,mean_estimate,bias,mc_se,sd,mean_boot_se\n";
    for (const auto& r : res.rows) {
      o << r.estimator << ',' << format_double(r.mean_estimate) << ',' << format_double(r.bias) << ','
        << format_double(r.mc_se) << ',' << format_double(r.sd) << ',' << format_double(r.mean_boot_se) << '\n';
    }
  });
  return kOk;
}

// ---------------------------------------------------------------------------
// model-fit
// ---------------------------------------------------------------------------

struct ModelFitArgs {
  std::string data;
  std::optional<std::string> columns;
  std::string out;
};

inline void add_model_fit_options(CLI::App& sub, ModelFitArgs& a) {
  sub.add_option("--data", a.data, "labeled training CSV (D=1 rows with Y are used when D is present)")->required();
  sub.add_option("--columns", a.columns, "comma list of predictors (default: every covariate; empty: intercept only)");
  sub.add_option("--out", a.out, "model file path (default: stdout)");
}

inline ModelFile fit_model_file(const Dataset& data, const std::vector<std::string>& columns) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    if (data.source[i] == 1 && data.has_outcome(i)) rows.push_back(i);
  }
  if (rows.empty()) throw Error(ErrorKind::empty_source, "no labeled rows to fit on");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const auto c = data.column_index(columns[j]);
    if (!c) throw Error(ErrorKind::schema, "column '" + columns[j] + "' not found");
    for (std::size_t k = 0; k < rows.size(); ++k) {
      x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
          data.covariates(static_cast<Eigen::Index>(rows[k]), static_cast<Eigen::Index>(*c));
    }
  }
  std::vector<double> y;
  for (auto i : rows) {
    const double v = data.outcome[i];
    if (v != 0.0 && v != 1.0) throw Error(ErrorKind::validation, "model-fit needs binary outcomes, row " + std::to_string(i));
    y.push_back(v);
  }
  const std::vector<double> unit(rows.size(), 1.0);
  const auto fit = fit_logistic_irls(Design::fit(FeatureMap::linear(), x).transform(x), y, unit);
  ModelFile m;
  m.columns = columns;
  m.coefficients.assign(fit.coefficients.data(), fit.coefficients.data() + fit.coefficients.size());
  return m;
}

inline int cmd_model_fit(const ModelFitArgs& a, std::ostream& out, std::ostream& err) {
  CsvOptions copt;
  copt.require_source = false;
  copt.ghat_column.clear();
  const auto csv = read_dataset_csv(a.data, copt);
  std::size_t bad = 0;
  for (const auto& v : validate_dataset(csv.data, ValidationMode::estimate)) {
    if (v.rule == "empty-target") continue;
    err << "validation: [" << v.rule << "] " << v.message << '\n';
    ++bad;
  }
  if (bad > 0) return kInvalidData;
  const auto columns = a.columns ? split_list(*a.columns) : csv.data.covariate_names;
  const auto m = fit_model_file(csv.data, columns);
  emit(a.out, out, [&](std::ostream& o) {
    o << "# data=" << a.data << '\n';
    write_model_file(o, m);
  });
  return kOk;
}

// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Model performance (risk) estimation under covariate shift"};
  app.name("shiftrisk");
  app.require_subcommand(1);

  EstimateArgs est;
  SimulateArgs sim;
  SplitEvalArgs split;
  ModelFitArgs fit;
  auto* s_est = app.add_subcommand("estimate", "estimate target-population risk of a prediction model");
  add_estimate_options(*s_est, est);
  auto* s_sim = app.add_subcommand("simulate", "run the Monte Carlo simulation study");
  add_simulate_options(*s_sim, sim);
  auto* s_split = app.add_subcommand("split-eval", "repeated semi-synthetic source/target splits of a labeled file");
  add_split_eval_options(*s_split, split);
  auto* s_fit = app.add_subcommand("model-fit", "fit a main-effects logistic prediction model");
  add_model_fit_options(*s_fit, fit);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*s_est) return cmd_estimate(est, out, err);
    if (*s_sim) return cmd_simulate(sim, out, err);
    if (*s_split) return cmd_split_eval(split, out, err);
    if (*s_fit) return cmd_model_fit(fit, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    if (is_numerical(e.kind())) return kNumerical;
    if (e.kind() == ErrorKind::invalid_argument || e.kind() == ErrorKind::invalid_strategy) return kUsage;
    return kInvalidData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumerical;
  }
  return kUsage;
}

}  // namespace shiftrisk::cli
