#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "gpepi/posterior.hpp"

using namespace gpepi;

namespace {

ChainTrace flat_trace(std::size_t records, double g, double gamma, std::size_t farms = 0) {
  ChainTrace t;
  for (int k = 0; k <= 10; ++k) t.header.knots.push_back(k);
  t.header.alpha = 1.0;
  t.header.lambda = 4.0;
  t.header.farm_count = farms;
  for (std::size_t i = 0; i < records; ++i) {
    TraceRecord r;
    r.iteration = i;
    r.g_bar.assign(t.header.knots.size(), g);
    r.length_scale = 3.0;
    r.gamma = gamma;
    r.omega = 1;
    r.i_omega = -2.0;
    t.records.push_back(r);
  }
  return t;
}

Dataset predictive_layout() {
  Rng rng = make_stream(31);
  Dataset d = synthetic_layout(50, 5.0, rng);
  d.farms[0].cull_time = 0.0;
  return d;
}

}  // namespace

TEST(Quantile, MatchesSortedRankDefinition) {
  Rng rng = make_stream(1);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + uniform_index(50, rng);
    std::vector<double> v(n);
    for (auto& x : v) x = std::floor(20.0 * uniform01(rng));
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (double p : {0.0, 0.025, 0.1, 0.5, 0.9, 0.975, 1.0}) {
      // smallest sample value whose empirical CDF reaches p
      double expected = sorted.back();
      for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<double>(i + 1) >= p * static_cast<double>(n)) {
          expected = sorted[i];
          break;
        }
      }
      EXPECT_EQ(quantile(v, p), expected) << "n=" << n << " p=" << p;
    }
  }
  EXPECT_THROW(quantile({}, 0.5), InputError);
  EXPECT_THROW(quantile({1.0}, 1.5), InputError);
}

TEST(Summaries, ConstantTraceGivesDegenerateIntervals) {
  auto t = flat_trace(40, 0.5, 0.8);
  auto s = summarize_scalars(t);
  EXPECT_EQ(s.gamma.lower, 0.8);
  EXPECT_EQ(s.gamma.upper, 0.8);
  EXPECT_DOUBLE_EQ(s.mean_period.median, 5.0);
  EXPECT_EQ(s.length_scale.median, 3.0);
  EXPECT_EQ(s.i_omega.median, -2.0);
  auto curve = summarize_curve(t, {0.0, 2.5, 7.0});
  for (std::size_t i = 0; i < 3; ++i) {
    // off-knot values relax slightly toward the prior mean
    EXPECT_NEAR(curve.median[i], std::exp(0.5), i == 1 ? 1e-4 : 1e-8);
    EXPECT_EQ(curve.lower[i], curve.upper[i]);
  }
}

TEST(Summaries, MeanInfectiousPeriod) {
  auto t = flat_trace(10, 0.0, 0.8);
  auto p = mean_infectious_period(t, 4.0);
  EXPECT_DOUBLE_EQ(p.median, 5.0);
  EXPECT_DOUBLE_EQ(p.lower, 5.0);
}

TEST(Summaries, InfectionProbabilityIsFlagFrequency) {
  auto t = flat_trace(10, 0.0, 0.8);
  t.header.preemptive_ids = {7, 9};
  for (std::size_t i = 0; i < 3; ++i) t.records[i].c_ids = {7};
  auto probs = infection_probabilities(t);
  ASSERT_EQ(probs.size(), 2u);
  EXPECT_EQ(probs[0].first, 7);
  EXPECT_DOUBLE_EQ(probs[0].second, 0.3);
  EXPECT_DOUBLE_EQ(probs[1].second, 0.0);
  t.records[4].c_ids = {8};
  EXPECT_THROW(infection_probabilities(t), InputError);
}

TEST(Summaries, RelativeInfectionTimeError) {
  EXPECT_DOUBLE_EQ(i_tilde(100.0, 90.0), 10.0);
  EXPECT_DOUBLE_EQ(i_tilde(-50.0, -60.0), -20.0);
  EXPECT_THROW(i_tilde(0.0, 1.0), InputError);
  auto t = flat_trace(3, 0.0, 0.8);
  t.records[0].infection = {{1, -2.0}, {2, 1.0}};
  t.records[1].infection = {{1, -2.0}, {2, 3.0}};
  t.records[2].infection = {{1, -2.0}, {2, 5.0}};
  EXPECT_DOUBLE_EQ(posterior_median_infection_sum(t), 1.0);
  EXPECT_DOUBLE_EQ(i_tilde(2.0, t), 50.0);
}

TEST(Summaries, EmptyTraceIsAnError) {
  ChainTrace t;
  EXPECT_THROW(summarize_scalars(t), InputError);
  EXPECT_THROW(infection_probabilities(t), InputError);
  EXPECT_THROW(posterior_median_infection_sum(t), InputError);
}

TEST(Predictive, ZeroRadiusCullsOnlyInfectedFarms) {
  auto data = predictive_layout();
  auto t = flat_trace(20, -1.0, 0.8, data.size());
  PredictiveOptions opt;
  opt.policies = {CullingPolicy::simple_ring(0.0), CullingPolicy::simple_ring(1.0)};
  opt.replicates_per_draw = 2;
  opt.seed = 4;
  auto res = posterior_predictive(t, data, opt);
  EXPECT_EQ(res.omega, 0u);
  for (const auto& r : res.rows[0].replicates) EXPECT_EQ(r.infected, r.culled);
  EXPECT_EQ(res.rows[0].replicates.size(), 40u);
  for (const auto& r : res.rows[1].replicates) EXPECT_GE(r.culled, r.infected);
}

TEST(Predictive, VanishingRatesInfectOnlyTheSeed) {
  auto data = predictive_layout();
  auto t = flat_trace(10, -800.0, 0.8, data.size());
  PredictiveOptions opt;
  opt.policies = {CullingPolicy::none()};
  auto res = posterior_predictive(t, data, opt);
  EXPECT_EQ(res.rows[0].infected.lower, 1.0);
  EXPECT_EQ(res.rows[0].infected.upper, 1.0);
  EXPECT_NEAR(res.rows[0].compensation.median,
              CompensationTable{}.rate(*data.farms[0].flock_type) * *data.farms[0].flock_size, 1e-9);
}

TEST(Predictive, ReplayReproducesAReportedReplicate) {
  auto data = predictive_layout();
  auto t = flat_trace(12, -0.5, 0.8, data.size());
  for (std::size_t i = 0; i < t.records.size(); ++i) t.records[i].g_bar[2] += 0.1 * static_cast<double>(i);
  PredictiveOptions opt;
  opt.policies = {CullingPolicy::simple_ring(1.0), CullingPolicy::capped_ring(2.0)};
  opt.max_draws = 5;
  opt.replicates_per_draw = 2;
  opt.seed = 9;
  opt.workers = 2;
  auto res = posterior_predictive(t, data, opt);
  for (std::size_t pi = 0; pi < 2; ++pi)
    for (const auto& r : res.rows[pi].replicates) {
      auto again = replay_predictive(t, data, opt, pi, r.draw, r.replicate);
      EXPECT_EQ(again.infected(), r.infected);
      EXPECT_EQ(again.culled(), r.culled);
    }
}

TEST(Predictive, MissingFlockDataIsReported) {
  auto data = predictive_layout();
  data.farms[3].flock_size.reset();
  auto t = flat_trace(5, -1.0, 0.8, data.size());
  PredictiveOptions opt;
  opt.policies = {CullingPolicy::none()};
  try {
    posterior_predictive(t, data, opt);
    FAIL() << "expected an error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find(" 4"), std::string::npos) << e.what();
  }
}

TEST(Predictive, FarmCountMismatchIsRejected) {
  auto data = predictive_layout();
  auto t = flat_trace(5, -1.0, 0.8, data.size() + 1);
  PredictiveOptions opt;
  opt.policies = {CullingPolicy::none()};
  EXPECT_THROW(posterior_predictive(t, data, opt), InputError);
}

TEST(Predictive, DrawSelectionSpreadsOverTheTrace) {
  EXPECT_EQ(predictive_draws(4, 0), (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(predictive_draws(10, 5), (std::vector<std::size_t>{0, 2, 4, 6, 8}));
  EXPECT_EQ(predictive_draws(3, 10).size(), 3u);
}
