#pragma once

// Dataset -> losses -> nuisances -> estimates, in one call. Used directly
// by the command-line tool and as the per-replicate bootstrap builder.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shiftrisk/core.hpp"
#include "shiftrisk/estimators.hpp"
#include "shiftrisk/inference.hpp"
#include "shiftrisk/nuisance.hpp"

namespace shiftrisk {

struct PipelineConfig {
  LossKind loss = LossKind::squared;
  NuisanceConfig nuisance{};
  std::vector<Method> methods{Method::naive, Method::cl, Method::iw, Method::dr};
};

struct PipelineResult {
  std::vector<double> estimates;  // one per configured method
  std::vector<double> predictions;
  std::vector<double> losses;
  NuisanceEstimates nuisance;
};

// g(X*) per row: the GHAT column when present, otherwise the model.
inline std::vector<double> model_predictions(const Dataset& data, const std::optional<PredictionModel>& model) {
  if (!data.ghat.empty()) return data.ghat;
  if (!model) throw Error(ErrorKind::invalid_argument, "no prediction model and no GHAT column");
  return select_model_inputs(data, *model);
}

inline PipelineResult run_pipeline(const Dataset& data, const std::optional<PredictionModel>& model,
                                   const PipelineConfig& cfg) {
  PipelineResult res;
  res.predictions = model_predictions(data, model);
  res.losses = compute_losses(data, res.predictions, cfg.loss);

  NuisanceConfig ncfg = cfg.nuisance;
  ncfg.fit_p = false;
  ncfg.fit_h = false;
  for (auto m : cfg.methods) {
    ncfg.fit_p |= m == Method::iw || m == Method::dr;
    ncfg.fit_h |= m == Method::cl || m == Method::dr;
  }
  if (ncfg.fit_p || ncfg.fit_h) {
    res.nuisance = cross_fit(data, res.predictions, cfg.loss, ncfg);
  }
  const auto input = make_input(data, res.losses, res.nuisance);
  for (auto m : cfg.methods) res.estimates.push_back(estimate(m, input));
  return res;
}

// Builder for bootstrap(). With refit on, the nuisances are re-estimated on
// every resample; with refit off, each resampled row keeps the full-sample
// nuisance values of the row it copies. The prediction model is never refit.
inline Builder pipeline_builder(std::optional<PredictionModel> model, PipelineConfig cfg, bool refit = true,
                                NuisanceEstimates full_sample = {}) {
  if (refit) {
    return [model = std::move(model), cfg = std::move(cfg)](const Dataset& sample, std::span<const std::size_t>) {
      return run_pipeline(sample, model, cfg).estimates;
    };
  }
  return [model = std::move(model), cfg = std::move(cfg), full = std::move(full_sample)](
             const Dataset& sample, std::span<const std::size_t> origin) {
    const auto g = model_predictions(sample, model);
    const auto losses = compute_losses(sample, g, cfg.loss);
    NuisanceEstimates ne;
    if (!full.p_hat.empty()) {
      for (auto i : origin) ne.p_hat.push_back(full.p_hat[i]);
    }
    if (!full.h_hat.empty()) {
      for (auto i : origin) ne.h_hat.push_back(full.h_hat[i]);
    }
    const auto input = make_input(sample, losses, ne);
    std::vector<double> out;
    for (auto m : cfg.methods) out.push_back(estimate(m, input));
    return out;
  };
}

}  // namespace shiftrisk
