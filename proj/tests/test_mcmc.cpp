#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "gpepi/mcmc.hpp"
#include "gpepi/oracle.hpp"
#include "gpepi/simulator.hpp"
#include "gpepi/validate.hpp"

using namespace gpepi;

namespace {

// Observed outbreak with several natural and several pre-emptive culls.
Dataset outbreak_dataset() {
  Rng lrng = make_stream(21, 0);
  Dataset layout = synthetic_layout(60, 5.0, lrng);
  auto rates = RateTable::from_function(DistanceIndex(layout), ParametricRate{ParametricKernel::exponential, 0.6, 2.0, 1.0});
  for (std::uint64_t seed = 0;; ++seed) {
    Rng rng = make_stream(21, 1 + seed);
    auto r = simulate_outbreak(layout, rates, {4.0, 0.8}, 0, CullingPolicy::simple_ring(0.6), rng);
    if (r.count(FarmSet::B) >= 5 && r.count(FarmSet::C) + r.count(FarmSet::D) >= 4) return export_observed(r, layout);
  }
}

Dataset single_case_dataset() { return prior_test_dataset(); }

SamplerConfig small_config() {
  SamplerConfig cfg;
  cfg.grid.count = 32;
  cfg.prior.alpha = 1.0;
  cfg.init_gamma = 0.8;
  cfg.tuning.moves_per_iteration = 10;
  cfg.tuning.audit_interval = 0;
  return cfg;
}

oracle::Instance as_instance(const AugmentedState& s, const RateTable& rates, const InfectiousPeriodParams& p) {
  oracle::Instance inst;
  const std::size_t n = s.size();
  inst.beta.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    inst.set.push_back(static_cast<oracle::Set>(static_cast<int>(s.set_of(j))));
    inst.i.push_back(s.infection[j]);
    inst.r.push_back(s.removal(j));
    for (std::size_t k = 0; k < n; ++k) inst.beta[j][k] = rates(j, k);
  }
  inst.omega = s.omega;
  inst.shape = p.shape;
  inst.rate = p.rate;
  return inst;
}

double naive(const Sampler& s, const AugmentedState& st) {
  return oracle::naive_log_likelihood(as_instance(st, s.rates(), {s.config().prior.lambda, s.gamma()}));
}

bool close_or_both_neg_inf(double a, double b, double tol) {
  if (a == kNegInf || b == kNegInf) return a == b;
  return std::fabs(a - b) <= tol * std::max(1.0, std::fabs(b));
}

}  // namespace

TEST(SamplerInit, FiniteAndDeterministic) {
  auto data = outbreak_dataset();
  Sampler a(data, small_config(), make_stream(5));
  Sampler b(data, small_config(), make_stream(5));
  EXPECT_TRUE(std::isfinite(a.log_likelihood()));
  EXPECT_EQ(a.log_likelihood(), b.log_likelihood());
  EXPECT_EQ(a.state().infection, b.state().infection);
  EXPECT_EQ(a.m_tilde(), 0u);
  EXPECT_GT(a.m(), 0u);
  const auto& s = a.state();
  EXPECT_EQ(s.set_of(s.omega), FarmSet::B);
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (s.infected(j)) {
      EXPECT_GE(s.infection[j], s.i_omega());
    }
  }
}

TEST(SamplerInit, NoPreemptiveFarmsMeansEmptyMembership) {
  auto data = single_case_dataset();
  Sampler s(data, small_config(), make_stream(1));
  EXPECT_EQ(s.m(), 0u);
  EXPECT_EQ(s.m_tilde(), 0u);
  EXPECT_TRUE(s.add_candidates().empty());
  EXPECT_TRUE(s.delete_candidates().empty());
}

TEST(SamplerRatios, InfectionTimeMovesMatchNaiveOracle) {
  auto data = outbreak_dataset();
  Sampler s(data, small_config(), make_stream(6));
  for (int i = 0; i < 20; ++i) s.sweep();
  Rng rng = make_stream(7);
  int finite = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const InfectiousPeriodParams p{s.config().prior.lambda, s.gamma()};
    const auto& st = s.state();
    const double before = naive(s, st);
    auto moves = s.move_candidates();
    auto adds = s.add_candidates();
    auto dels = s.delete_candidates();
    const auto kind = uniform_index(3, rng);
    if (kind == 0 && !moves.empty()) {
      auto j = moves[uniform_index(moves.size(), rng)];
      double t = st.removal(j) - gamma_draw(p.shape, p.rate, rng);
      AugmentedState next = st;
      next.infection[j] = t;
      double expected = kNegInf;
      if (t > st.i_omega()) {
        expected = naive(s, next) - before + oracle::log_gamma_density(st.removal(j) - st.infection[j], p.shape, p.rate) -
                   oracle::log_gamma_density(st.removal(j) - t, p.shape, p.rate);
      }
      ASSERT_TRUE(close_or_both_neg_inf(s.log_ratio_move(j, t), expected, 1e-8)) << "move " << trial;
      finite += std::isfinite(expected);
    } else if (kind == 1 && !adds.empty()) {
      auto j = adds[uniform_index(adds.size(), rng)];
      double t = st.removal(j) - gamma_draw(p.shape, p.rate, rng);
      AugmentedState next = st;
      next.infection[j] = t;
      double expected = kNegInf;
      if (t > st.i_omega()) {
        expected = naive(s, next) - before + std::log(static_cast<double>(adds.size())) -
                   std::log(static_cast<double>(dels.size() + 1)) -
                   oracle::log_gamma_density(st.removal(j) - t, p.shape, p.rate);
      }
      ASSERT_TRUE(close_or_both_neg_inf(s.log_ratio_add(j, t), expected, 1e-8))
          << "add " << trial << ": " << s.log_ratio_add(j, t) << " vs " << expected;
      finite += std::isfinite(expected);
    } else if (kind == 2 && !dels.empty()) {
      auto j = dels[uniform_index(dels.size(), rng)];
      AugmentedState next = st;
      next.infection[j] = kNever;
      const double expected = naive(s, next) - before + std::log(static_cast<double>(dels.size())) -
                              std::log(static_cast<double>(adds.size() + 1)) +
                              oracle::log_gamma_density(st.removal(j) - st.infection[j], p.shape, p.rate);
      ASSERT_TRUE(close_or_both_neg_inf(s.log_ratio_delete(j), expected, 1e-8)) << "delete " << trial;
      finite += std::isfinite(expected);
    }
    s.sweep();
  }
  EXPECT_GT(finite, 20);
}

TEST(SamplerRatios, UnchangedParametersAlwaysAccept) {
  auto data = outbreak_dataset();
  Sampler s(data, small_config(), make_stream(8));
  EXPECT_EQ(s.log_ratio_gamma(s.gamma()), 0.0);
  const auto& st = s.state();
  auto moves = s.move_candidates();
  ASSERT_FALSE(moves.empty());
  EXPECT_NEAR(s.log_ratio_move(moves[0], st.infection[moves[0]]), 0.0, 1e-12);

  auto cfg = small_config();
  cfg.tuning.sigma_l = 1e-13;
  cfg.tuning.sigma_gamma = 1e-13;
  cfg.tuning.moves_per_iteration = 0;
  Sampler still(data, cfg, make_stream(9));
  for (int i = 0; i < 50; ++i) still.sweep();
  EXPECT_EQ(still.stats().rate(Update::l), 1.0);
  EXPECT_EQ(still.stats().rate(Update::gamma), 1.0);
}

TEST(SamplerRatios, SingleCaseGammaRatioClosedForm) {
  auto data = single_case_dataset();
  auto cfg = small_config();
  Sampler s(data, cfg, make_stream(10));
  const double period = s.state().removal(0) - s.state().i_omega();
  const double lambda = cfg.prior.lambda;
  auto log_pdf = [&](double rate) {
    return lambda * std::log(rate) + (lambda - 1.0) * std::log(period) - rate * period - std::lgamma(lambda);
  };
  for (double g2 : {0.1, 0.5, 1.3, 4.0}) {
    const double expected = -cfg.prior.gamma_rate * (g2 - s.gamma()) + log_pdf(g2) - log_pdf(s.gamma());
    EXPECT_NEAR(s.log_ratio_gamma(g2), expected, 1e-10);
  }
  EXPECT_EQ(s.log_ratio_gamma(-0.1), kNegInf);
}

TEST(SamplerOmega, NoOtherInfectionMakesTheSwapANoOp) {
  auto data = single_case_dataset();
  Sampler s(data, small_config(), make_stream(11));
  const auto before = s.state().omega;
  EXPECT_FALSE(s.update_omega());
  EXPECT_EQ(s.state().omega, before);
  EXPECT_EQ(s.stats().proposed[static_cast<std::size_t>(Update::omega)], 0u);
}

TEST(SamplerOmega, SwapKeepsTheEarliestCaseInvariant) {
  auto data = outbreak_dataset();
  Sampler s(data, small_config(), make_stream(12));
  for (int i = 0; i < 200; ++i) {
    s.sweep();
    const auto& st = s.state();
    for (std::size_t j = 0; j < st.size(); ++j)
      if (st.infected(j) && j != st.omega) {
        ASSERT_LT(st.i_omega(), st.infection[j]);
      }
  }
}

TEST(SamplerRatios, AddThenDeleteIsReversible) {
  auto data = outbreak_dataset();
  Sampler s(data, small_config(), make_stream(13));
  for (int i = 0; i < 10; ++i) s.sweep();
  Rng rng = make_stream(14);
  int checked = 0;
  for (int trial = 0; trial < 100 && checked < 30; ++trial) {
    auto adds = s.add_candidates();
    if (adds.empty()) break;
    auto j = adds[uniform_index(adds.size(), rng)];
    const double t = s.state().removal(j) - gamma_draw(s.config().prior.lambda, s.gamma(), rng);
    const double forward = s.log_ratio_add(j, t);
    if (!std::isfinite(forward)) continue;
    ChainState cs = s.chain_state();
    cs.augmented.infection[j] = t;
    Sampler after(data, small_config(), make_stream(15), cs);
    EXPECT_NEAR(forward + after.log_ratio_delete(j), 0.0, 1e-9);
    ++checked;
  }
  EXPECT_GT(checked, 5);
}

TEST(SamplerBookkeeping, FlaggedCountTracksMembership) {
  auto data = outbreak_dataset();
  Sampler s(data, small_config(), make_stream(16));
  for (int i = 0; i < 300; ++i) {
    s.sweep();
    ASSERT_EQ(s.m_tilde(), s.count_flagged());
    ASSERT_LE(s.m_tilde(), s.m());
  }
  EXPECT_LE(s.audit(), 1e-6);
  EXPECT_GT(s.stats().accepted[static_cast<std::size_t>(Update::add)], 0u);
  EXPECT_GT(s.stats().accepted[static_cast<std::size_t>(Update::remove)], 0u);
}

TEST(SamplerChain, ZeroIterationsGiveEmptyTrace) {
  auto data = outbreak_dataset();
  auto cfg = small_config();
  cfg.tuning.iterations = 0;
  Sampler s(data, cfg, make_stream(17));
  auto trace = run_chain(s);
  EXPECT_TRUE(trace.records.empty());
  EXPECT_FALSE(trace.header.knots.empty());
}

TEST(SamplerChain, SameSeedSameTrace) {
  auto data = outbreak_dataset();
  auto cfg = small_config();
  cfg.tuning.iterations = 60;
  cfg.tuning.thinning = 3;
  cfg.tuning.audit_interval = 20;
  Sampler a(data, cfg, make_stream(18));
  Sampler b(data, cfg, make_stream(18));
  auto ta = run_chain(a), tb = run_chain(b);
  ASSERT_EQ(ta.records.size(), 20u);
  for (std::size_t i = 0; i < ta.records.size(); ++i)
    EXPECT_EQ(to_json(ta.records[i]).dump(), to_json(tb.records[i]).dump());
}

TEST(SamplerChain, ResumeReproducesUninterruptedRun) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("gpepi_resume_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  auto data = outbreak_dataset();
  auto cfg = small_config();
  cfg.tuning.iterations = 80;
  cfg.tuning.thinning = 2;
  auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };

  Sampler whole(data, cfg, make_stream(19));
  const auto header = whole.header(0, 19);
  run_chain(whole, header, {dir / "whole.jsonl", dir / "whole.json", 20, false});

  auto half = cfg;
  half.tuning.iterations = 40;
  Sampler first(data, half, make_stream(19));
  run_chain(first, header, {dir / "split.jsonl", dir / "split.json", 20, false});
  Sampler second(data, cfg, make_stream(19));
  run_chain(second, header, {dir / "split.jsonl", dir / "split.json", 20, true});

  EXPECT_EQ(read(dir / "whole.jsonl"), read(dir / "split.jsonl"));
  EXPECT_EQ(whole.log_likelihood(), second.log_likelihood());
  fs::remove_all(dir);
}

TEST(SamplerGUpdate, TinyStepIsAlmostAlwaysAccepted) {
  auto data = outbreak_dataset();
  auto cfg = small_config();
  cfg.tuning.delta = 1e-6;
  cfg.tuning.moves_per_iteration = 0;
  cfg.fixed_l = true;
  Sampler s(data, cfg, make_stream(20));
  for (int i = 0; i < 200; ++i) s.sweep();
  EXPECT_GT(s.stats().rate(Update::g), 0.95);
  EXPECT_EQ(s.stats().proposed[static_cast<std::size_t>(Update::l)], 0u);
}

TEST(SamplerPrior, LengthScaleMeanMatchesPrior) {
  auto rep = run_prior_reproduction(20000, 10, 3);
  const auto& l = rep.checks[1];
  ASSERT_EQ(l.name, "l");
  EXPECT_NEAR(l.mean, 100.0, 5.0);
}
