#pragma once

// Uncertainty for the risk estimators: plug-in efficient influence function
// and sandwich standard error for the unweighted doubly robust estimator, and
// a row or cluster-within-stratum bootstrap that reruns the whole pipeline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "shiftrisk/core.hpp"
#include "shiftrisk/estimators.hpp"
#include "shiftrisk/parallel.hpp"
#include "shiftrisk/rng.hpp"

namespace shiftrisk {

// ---------------------------------------------------------------------------
// Influence function
// ---------------------------------------------------------------------------

struct InfluenceValues {
  std::vector<double> chi;
  double psi_hat = 0.0;
};

// chi_i = (1/tau) [ I(D=0)(h_i - psi) + I(D=1) (1-p_i)/p_i (L_i - h_i) ],
// tau = n0/n. Its sample mean vanishes at the DR estimate.
inline InfluenceValues eif_values(const EstimatorInput& in, double psi_hat) {
  detail::check_lengths(in, true, true);
  for (double w : in.weights) {
    if (w != 1.0) throw Error(ErrorKind::invalid_argument, "influence values are defined for unit weights only");
  }
  const auto n = in.rows();
  std::size_t n0 = 0;
  for (auto d : in.source) n0 += d == 0;
  if (n0 == 0) throw Error(ErrorKind::empty_target, "no D=0 rows");
  const double tau = static_cast<double>(n0) / static_cast<double>(n);
  InfluenceValues iv;
  iv.psi_hat = psi_hat;
  iv.chi.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = in.source[i] == 0
                         ? in.h_hat[i] - psi_hat
                         : detail::inverse_odds(in.p_hat[i]) * (detail::source_loss(in, i) - in.h_hat[i]);
    iv.chi[i] = v / tau;
  }
  return iv;
}

// sqrt(mean(chi^2) / n).
inline double sandwich_se(const InfluenceValues& iv) {
  const auto n = iv.chi.size();
  if (n < 2) throw Error(ErrorKind::invalid_argument, "sandwich SE needs at least two rows");
  double ss = 0.0;
  for (double c : iv.chi) ss += c * c;
  return std::sqrt(ss / static_cast<double>(n)) / std::sqrt(static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

enum class ResampleUnit { row, cluster };
enum class CiMethod { percentile, normal };

inline const char* to_string(ResampleUnit u) { return u == ResampleUnit::row ? "row" : "cluster"; }
inline const char* to_string(CiMethod c) { return c == CiMethod::percentile ? "percentile" : "normal"; }

struct BootstrapPlan {
  int replicates = 1000;
  ResampleUnit unit = ResampleUnit::row;
  std::uint64_t seed = 0;
  CiMethod ci = CiMethod::percentile;
  int threads = 1;
  double max_failure_fraction = 0.05;
};

struct BootstrapInterval {
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  std::vector<double> estimates;  // successful replicates, replicate order
};

struct BootstrapResult {
  std::vector<BootstrapInterval> components;  // one per builder output
  std::size_t failures = 0;
  std::vector<std::string> warnings;
};

inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Lower and upper 2.5% order statistics.
inline std::pair<double, double> percentile_interval(std::vector<double> v) {
  if (v.empty()) throw Error(ErrorKind::invalid_argument, "no replicate estimates");
  std::sort(v.begin(), v.end());
  const double top = static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(0.025 * top));
  const auto hi = static_cast<std::size_t>(std::ceil(0.975 * top));
  return {v[lo], v[hi]};
}

// Bootstrap sample of row indices plus the cluster relabelling it needs.
struct Resample {
  std::vector<std::size_t> rows;
  std::vector<std::string> cluster_labels;  // cluster mode only
};

// Strata in order of first appearance; an absent stratum column is a single
// stratum.
inline std::vector<std::vector<std::vector<std::size_t>>> target_clusters_by_stratum(const Dataset& data) {
  std::map<std::string, std::size_t> stratum_pos;
  std::vector<std::map<std::string, std::size_t>> cluster_pos;
  std::vector<std::vector<std::vector<std::size_t>>> out;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    if (data.source[i] != 0) continue;
    const std::string s = data.has_strata() ? data.stratum[i] : std::string();
    auto [sit, snew] = stratum_pos.emplace(s, out.size());
    if (snew) {
      out.emplace_back();
      cluster_pos.emplace_back();
    }
    auto& clusters = out[sit->second];
    auto [cit, cnew] = cluster_pos[sit->second].emplace(data.cluster[i], clusters.size());
    if (cnew) clusters.emplace_back();
    clusters[cit->second].push_back(i);
  }
  return out;
}

// Row mode: n rows with replacement. Cluster mode: target clusters drawn with
// replacement within each stratum, source rows drawn row-wise and
// independently; a cluster drawn k times yields k distinct cluster labels.
inline Resample draw_resample(const Dataset& data, ResampleUnit unit, Philox4x32& rng,
                              const std::vector<std::vector<std::vector<std::size_t>>>* strata = nullptr) {
  Resample r;
  const auto n = data.rows();
  if (unit == ResampleUnit::row) {
    r.rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) r.rows.push_back(static_cast<std::size_t>(rng.below(n)));
    return r;
  }
  if (!data.has_clusters()) throw Error(ErrorKind::invalid_argument, "cluster bootstrap requires a cluster column");
  std::vector<std::size_t> source_rows;
  for (std::size_t i = 0; i < n; ++i) {
    if (data.source[i] == 1) source_rows.push_back(i);
  }
  for (std::size_t k = 0; k < source_rows.size(); ++k) {
    const auto i = source_rows[static_cast<std::size_t>(rng.below(source_rows.size()))];
    r.rows.push_back(i);
    r.cluster_labels.push_back("src:" + std::to_string(k));
  }
  std::vector<std::vector<std::vector<std::size_t>>> local;
  if (strata == nullptr) {
    local = target_clusters_by_stratum(data);
    strata = &local;
  }
  std::size_t draw = 0;
  for (const auto& clusters : *strata) {
    for (std::size_t k = 0; k < clusters.size(); ++k, ++draw) {
      const auto& c = clusters[static_cast<std::size_t>(rng.below(clusters.size()))];
      const std::string label = data.cluster[c.front()] + "#" + std::to_string(draw);
      for (auto i : c) {
        r.rows.push_back(i);
        r.cluster_labels.push_back(label);
      }
    }
  }
  return r;
}

inline Dataset apply_resample(const Dataset& data, const Resample& r) {
  Dataset out = data.subset(r.rows);
  if (!r.cluster_labels.empty()) out.cluster = r.cluster_labels;
  return out;
}

// Maps a resampled dataset (and the original row index of each of its rows)
// to one or more estimates.
using Builder = std::function<std::vector<double>(const Dataset&, std::span<const std::size_t>)>;

// Reruns `build` on B resampled datasets. Replicate b draws from the stream
// (seed, b), so the sequence of estimates is independent of the thread count.
// Replicates whose builder throws are skipped; more than
// plan.max_failure_fraction failures is an error.
inline BootstrapResult bootstrap(const Dataset& data, const Builder& build, std::span<const double> point_estimates,
                                 const BootstrapPlan& plan) {
  if (plan.replicates < 2) throw Error(ErrorKind::invalid_argument, "bootstrap needs at least 2 replicates");
  BootstrapResult res;
  std::vector<std::vector<std::vector<std::size_t>>> strata;
  if (plan.unit == ResampleUnit::cluster) {
    if (!data.has_clusters()) throw Error(ErrorKind::invalid_argument, "cluster bootstrap requires a cluster column");
    strata = target_clusters_by_stratum(data);
    for (std::size_t s = 0; s < strata.size(); ++s) {
      if (strata[s].size() == 1) {
        res.warnings.push_back("stratum " + std::to_string(s) +
                               " has a single cluster; it is drawn in every replicate");
      }
    }
  }

  const auto B = static_cast<std::size_t>(plan.replicates);
  std::vector<std::vector<double>> reps(B);
  std::vector<std::string> errors(B);
  parallel_for(B, plan.threads, [&](std::size_t b) {
    auto rng = make_stream(plan.seed, b, Purpose::bootstrap);
    const auto draw = draw_resample(data, plan.unit, rng, &strata);
    const auto sample = apply_resample(data, draw);
    try {
      reps[b] = build(sample, draw.rows);
      if (reps[b].size() != point_estimates.size()) {
        throw Error(ErrorKind::invalid_argument, "builder returned the wrong number of estimates");
      }
      for (double v : reps[b]) {
        if (!std::isfinite(v)) throw Error(ErrorKind::invalid_argument, "non-finite replicate estimate");
      }
    } catch (const std::exception& e) {
      reps[b].clear();
      errors[b] = e.what();
    }
  });

  for (std::size_t b = 0; b < B; ++b) res.failures += reps[b].empty();
  if (static_cast<double>(res.failures) > plan.max_failure_fraction * static_cast<double>(B)) {
    std::ostringstream os;
    os << res.failures << " of " << B << " bootstrap replicates failed";
    std::map<std::string, int> counts;
    for (const auto& e : errors) {
      if (!e.empty()) ++counts[e];
    }
    for (const auto& [msg, c] : counts) os << "\n  " << c << "x " << msg;
    throw Error(ErrorKind::bootstrap_failure, os.str());
  }
  if (res.failures > 0) res.warnings.push_back(std::to_string(res.failures) + " bootstrap replicate(s) failed and were skipped");

  res.components.resize(point_estimates.size());
  for (std::size_t k = 0; k < point_estimates.size(); ++k) {
    auto& c = res.components[k];
    for (const auto& r : reps) {
      if (!r.empty()) c.estimates.push_back(r[k]);
    }
    c.se = sample_sd(c.estimates);
    if (plan.ci == CiMethod::percentile) {
      std::tie(c.ci_lower, c.ci_upper) = percentile_interval(c.estimates);
    } else {
      c.ci_lower = point_estimates[k] - 1.96 * c.se;
      c.ci_upper = point_estimates[k] + 1.96 * c.se;
    }
  }
  return res;
}

}  // namespace shiftrisk
