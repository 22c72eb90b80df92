#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "shiftrisk/inference.hpp"
#include "shiftrisk/pipeline.hpp"
#include "test_util.hpp"

using namespace shiftrisk;

namespace {

Builder source_mean_builder() {
  return [](const Dataset& ds, std::span<const std::size_t>) {
    double s = 0.0;
    double n = 0.0;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      if (ds.source[i]) {
        s += ds.outcome[i];
        n += 1.0;
      }
    }
    return std::vector<double>{s / n};
  };
}

Dataset survey_like(int strata, int clusters, int per_cluster, std::uint64_t seed) {
  auto rng = make_stream(seed, 0, Purpose::data);
  const std::size_t n_target = static_cast<std::size_t>(strata * clusters * per_cluster);
  const std::size_t n_source = 60;
  const std::size_t n = n_target + n_source;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 1);
  std::vector<std::uint8_t> d(n);
  std::vector<double> y(n, kMissing);
  Dataset ds;
  std::size_t r = 0;
  for (int s = 0; s < strata; ++s) {
    for (int c = 0; c < clusters; ++c) {
      for (int k = 0; k < per_cluster; ++k, ++r) {
        x(static_cast<Eigen::Index>(r), 0) = rng.normal() + 0.3 * c;
        d[r] = 0;
        ds.cluster.push_back("s" + std::to_string(s) + "c" + std::to_string(c));
        ds.stratum.push_back("s" + std::to_string(s));
      }
    }
  }
  for (; r < n; ++r) {
    x(static_cast<Eigen::Index>(r), 0) = rng.normal();
    d[r] = 1;
    y[r] = rng.bernoulli(0.3) ? 1.0 : 0.0;
    ds.cluster.push_back("src" + std::to_string(r));
    ds.stratum.push_back("source");
  }
  auto out = make_dataset({"x"}, std::move(x), std::move(d), std::move(y));
  out.cluster = ds.cluster;
  out.stratum = ds.stratum;
  return out;
}

}  // namespace

TEST(Influence, HandExample) {
  // D=(1,1,0), L=(0.2,0.4,-), p=0.5, h=0.3: psi = 0.3, tau = 1/3.
  const std::vector<std::uint8_t> d{1, 1, 0};
  const std::vector<double> l{0.2, 0.4, kMissing};
  const std::vector<double> p{0.5, 0.5, 0.5};
  const std::vector<double> h{0.3, 0.3, 0.3};
  const std::vector<double> w{1, 1, 1};
  const EstimatorInput in{d, l, p, h, w};
  const double psi = estimate_dr(in);
  EXPECT_NEAR(psi, 0.3, 1e-15);
  const auto iv = eif_values(in, psi);
  EXPECT_NEAR(iv.chi[0], -0.3, 1e-14);
  EXPECT_NEAR(iv.chi[1], 0.3, 1e-14);
  EXPECT_NEAR(iv.chi[2], 0.0, 1e-14);
  EXPECT_NEAR(sandwich_se(iv), std::sqrt(0.02), 1e-14);
}

TEST(Influence, ThreeRowDrExample) {
  // Rows: D=0 h=0.2; D=1 L=0.5 h=0.3 p=0.5; D=1 L=0.1 h=0.1 p=0.25.
  // psi = 0.4, tau = 1/3: chi = 3 * (0.2 - 0.4, 1 * 0.2, 3 * 0) = (-0.6, 0.6, 0).
  const std::vector<std::uint8_t> d{0, 1, 1};
  const std::vector<double> l{kMissing, 0.5, 0.1};
  const std::vector<double> p{0.5, 0.5, 0.25};
  const std::vector<double> h{0.2, 0.3, 0.1};
  const std::vector<double> w{1, 1, 1};
  const EstimatorInput in{d, l, p, h, w};
  const double psi = estimate_dr(in);
  EXPECT_NEAR(psi, 0.4, 1e-15);
  const auto iv = eif_values(in, psi);
  EXPECT_NEAR(iv.chi[0], -0.6, 1e-14);
  EXPECT_NEAR(iv.chi[1], 0.6, 1e-14);
  EXPECT_NEAR(iv.chi[2], 0.0, 1e-14);
}

TEST(Influence, MeanZeroAtTheDrEstimate) {
  auto rng = make_stream(61, 0, Purpose::data);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = 3 + static_cast<std::size_t>(rng.below(40));
    std::vector<std::uint8_t> d(n);
    std::vector<double> l(n), p(n), h(n), w(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = i == 0 ? 1 : (i == 1 ? 0 : static_cast<std::uint8_t>(rng.below(2)));
      l[i] = d[i] ? rng.uniform() : kMissing;
      p[i] = 0.02 + 0.96 * rng.uniform();
      h[i] = rng.uniform();
    }
    const EstimatorInput in{d, l, p, h, w};
    const auto iv = eif_values(in, estimate_dr(in));
    double mean = 0.0;
    double scale = 0.0;
    for (double c : iv.chi) {
      mean += c;
      scale += std::fabs(c);
    }
    EXPECT_LE(std::fabs(mean), 1e-10 * std::max(1.0, scale));
  }
}

TEST(Influence, UnitWeightsOnly) {
  const std::vector<std::uint8_t> d{1, 0};
  const std::vector<double> l{0.1, kMissing}, p{0.5, 0.5}, h{0.1, 0.1}, w{1, 2};
  EXPECT_THROW(eif_values({d, l, p, h, w}, 0.1), Error);
}

TEST(Bootstrap, PercentileOrderStatistics) {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  std::reverse(v.begin(), v.end());
  const auto [lo, hi] = percentile_interval(v);
  EXPECT_EQ(lo, 3.0);
  EXPECT_EQ(hi, 98.0);
  EXPECT_NEAR(sample_sd({1.0, 2.0, 3.0, 4.0}), std::sqrt(5.0 / 3.0), 1e-15);
}

TEST(Bootstrap, DeterministicAcrossThreadCounts) {
  auto rng = make_stream(62, 0, Purpose::data);
  const auto ds = testutil::random_dataset(80, 2, rng);
  const std::vector<double> point{0.4};
  BootstrapPlan plan;
  plan.replicates = 64;
  plan.seed = 5;
  plan.threads = 1;
  const auto a = bootstrap(ds, source_mean_builder(), point, plan);
  plan.threads = 3;
  const auto b = bootstrap(ds, source_mean_builder(), point, plan);
  EXPECT_EQ(a.components[0].estimates, b.components[0].estimates);
  EXPECT_EQ(a.components[0].se, b.components[0].se);
  plan.seed = 6;
  const auto c = bootstrap(ds, source_mean_builder(), point, plan);
  EXPECT_NE(a.components[0].estimates, c.components[0].estimates);
}

TEST(Bootstrap, IdenticalRowsGiveZeroSpread) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(10, 1);
  std::vector<std::uint8_t> d(10, 1);
  d[9] = 0;
  auto ds = make_dataset({"x"}, x, d, std::vector<double>(10, 1.0));
  BootstrapPlan plan;
  plan.replicates = 50;
  auto builder = [](const Dataset& s, std::span<const std::size_t>) {
    return std::vector<double>{s.outcome.empty() ? 0.0 : s.outcome[0]};
  };
  const std::vector<double> point{1.0};
  const auto r = bootstrap(ds, builder, point, plan);
  EXPECT_EQ(r.components[0].se, 0.0);
  EXPECT_EQ(r.components[0].ci_lower, 1.0);
  EXPECT_EQ(r.components[0].ci_upper, 1.0);
}

TEST(Bootstrap, MatchesTheExactBootstrapVariance) {
  // Row bootstrap of a mean of (0, 1, 2): exact variance = (2/3) / 3.
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 1);
  auto ds = make_dataset({"x"}, x, {1, 1, 1}, {0.0, 1.0, 2.0});
  auto builder = [](const Dataset& s, std::span<const std::size_t>) {
    return std::vector<double>{std::accumulate(s.outcome.begin(), s.outcome.end(), 0.0) / 3.0};
  };
  BootstrapPlan plan;
  plan.replicates = 40000;
  plan.seed = 9;
  const std::vector<double> point{1.0};
  const auto r = bootstrap(ds, builder, point, plan);
  EXPECT_NEAR(r.components[0].se, std::sqrt(2.0 / 9.0), 0.01);
  // Each resample mean is k/3 for k in 0..6.
  std::set<double> support(r.components[0].estimates.begin(), r.components[0].estimates.end());
  EXPECT_EQ(support.size(), 7u);
}

TEST(Bootstrap, NormalIntervalIsCenteredOnThePointEstimate) {
  auto rng = make_stream(63, 0, Purpose::data);
  const auto ds = testutil::random_dataset(60, 1, rng);
  BootstrapPlan plan;
  plan.replicates = 100;
  plan.ci = CiMethod::normal;
  const std::vector<double> point{0.37};
  const auto r = bootstrap(ds, source_mean_builder(), point, plan);
  const auto& c = r.components[0];
  EXPECT_NEAR(c.ci_lower, 0.37 - 1.96 * c.se, 1e-15);
  EXPECT_NEAR(c.ci_upper, 0.37 + 1.96 * c.se, 1e-15);
}

TEST(Bootstrap, ClusterResamplingStructure) {
  const auto ds = survey_like(2, 5, 4, 64);
  const auto strata = target_clusters_by_stratum(ds);
  ASSERT_EQ(strata.size(), 2u);
  EXPECT_EQ(strata[0].size(), 5u);
  auto rng = make_stream(1, 0, Purpose::bootstrap);
  const auto r = draw_resample(ds, ResampleUnit::cluster, rng, &strata);
  const auto s = apply_resample(ds, r);
  EXPECT_EQ(s.n_source(), ds.n_source());
  EXPECT_EQ(s.n_target(), ds.n_target());
  // Every drawn target cluster keeps its rows together under a fresh label.
  std::set<std::string> labels;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    if (!s.source[i]) labels.insert(s.cluster[i]);
  }
  EXPECT_EQ(labels.size(), 10u);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    EXPECT_EQ(s.stratum[i], ds.stratum[r.rows[i]]);
  }
}

TEST(Bootstrap, SingleClusterStratumWarns) {
  auto ds = survey_like(2, 3, 2, 65);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    if (!ds.source[i] && ds.stratum[i] == "s1") ds.cluster[i] = "only";
  }
  BootstrapPlan plan;
  plan.replicates = 10;
  plan.unit = ResampleUnit::cluster;
  const std::vector<double> point{0.3};
  const auto r = bootstrap(ds, source_mean_builder(), point, plan);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("single cluster"), std::string::npos);
  ds.cluster.clear();
  EXPECT_THROW(bootstrap(ds, source_mean_builder(), point, plan), Error);
}

TEST(Bootstrap, FailureBudget) {
  auto rng = make_stream(66, 0, Purpose::data);
  const auto ds = testutil::random_dataset(40, 1, rng);
  const std::vector<double> point{0.0};
  BootstrapPlan plan;
  plan.replicates = 100;
  auto sometimes = [](const Dataset&, std::span<const std::size_t> origin) -> std::vector<double> {
    if (origin[0] % 40 == 0) throw Error(ErrorKind::separation, "boom");
    return {1.0};
  };
  const auto ok = bootstrap(ds, sometimes, point, plan);
  EXPECT_GT(ok.failures, 0u);
  EXPECT_LE(ok.failures, 5u);
  EXPECT_EQ(ok.components[0].estimates.size(), 100u - ok.failures);
  EXPECT_FALSE(ok.warnings.empty());
  auto always = [](const Dataset&, std::span<const std::size_t>) -> std::vector<double> {
    throw Error(ErrorKind::separation, "boom");
  };
  try {
    bootstrap(ds, always, point, plan);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::bootstrap_failure);
  }
}

TEST(Bootstrap, RefitOffReusesFullSampleNuisances) {
  auto rng = make_stream(67, 0, Purpose::data);
  const auto ds = testutil::random_dataset(200, 2, rng);
  PipelineConfig cfg;
  cfg.nuisance.p_map = FeatureMap::linear();
  cfg.nuisance.h_map = FeatureMap::linear();
  const auto full = run_pipeline(ds, std::nullopt, cfg);
  const auto builder = pipeline_builder(std::nullopt, cfg, false, full.nuisance);
  const auto idx = all_rows(ds.rows());
  EXPECT_EQ(builder(ds, idx), full.estimates);
  const auto refit = pipeline_builder(std::nullopt, cfg, true);
  EXPECT_EQ(refit(ds, idx), full.estimates);
}
