#ifndef GPEPI_VALIDATE_HPP
#define GPEPI_VALIDATE_HPP

// Self-check suites shared by the `validate` command and the test
// binaries: likelihood against the naive oracle, incremental deltas
// against full evaluations, the underrelaxed-proposal identity, and
// reproduction of the priors by the sampler with the likelihood off.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gpepi/core.hpp"
#include "gpepi/gp.hpp"
#include "gpepi/likelihood.hpp"
#include "gpepi/mcmc.hpp"
#include "gpepi/oracle.hpp"

namespace gpepi {

struct SuiteResult {
  std::string name;
  bool passed = false;
  double metric = 0.0;     // measured discrepancy
  double tolerance = 0.0;
  std::string detail;
};

/// Optimised representation of an oracle instance.
inline std::pair<AugmentedState, RateTable> to_state(const oracle::Instance& inst) {
  const std::size_t n = inst.size();
  AugmentedState s;
  s.infection.assign(n, kNever);
  s.natural_cull.assign(n, kNever);
  s.preemptive_cull.assign(n, kNever);
  s.omega = inst.omega;
  RateTable rates(n);
  for (std::size_t j = 0; j < n; ++j) {
    switch (inst.set[j]) {
      case oracle::Set::A: break;
      case oracle::Set::B:
        s.infection[j] = inst.i[j];
        s.natural_cull[j] = inst.r[j];
        break;
      case oracle::Set::C:
        s.infection[j] = inst.i[j];
        s.preemptive_cull[j] = inst.r[j];
        break;
      case oracle::Set::D: s.preemptive_cull[j] = inst.r[j]; break;
    }
    for (std::size_t k = j + 1; k < n; ++k) rates.set(j, k, inst.beta[j][k]);
  }
  return {std::move(s), std::move(rates)};
}

inline oracle::Instance from_state(const AugmentedState& s, const RateTable& rates, const InfectiousPeriodParams& p) {
  oracle::Instance inst;
  const std::size_t n = s.size();
  inst.omega = s.omega;
  inst.shape = p.shape;
  inst.rate = p.rate;
  inst.i = s.infection;
  inst.r.resize(n);
  inst.set.resize(n);
  inst.beta.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    inst.r[j] = s.removal(j);
    switch (s.set_of(j)) {
      case FarmSet::A: inst.set[j] = oracle::Set::A; break;
      case FarmSet::B: inst.set[j] = oracle::Set::B; break;
      case FarmSet::C: inst.set[j] = oracle::Set::C; break;
      case FarmSet::D: inst.set[j] = oracle::Set::D; break;
    }
    for (std::size_t k = 0; k < n; ++k) inst.beta[j][k] = rates(j, k);
  }
  return inst;
}

namespace detail {

/// |a - b| / max(1, |b|) with matching infinities counted as zero.
inline double log_gap(double a, double b) {
  if (a == b) return 0.0;
  if (!std::isfinite(a) || !std::isfinite(b)) return kNever;
  return std::fabs(a - b) / std::max(1.0, std::fabs(b));
}

}  // namespace detail

/// Optimised vs naive likelihood on random instances. `perturb` is added
/// to the optimised value as a negative control.
inline SuiteResult likelihood_oracle_suite(std::size_t instances, std::uint64_t seed, double perturb = 0.0) {
  SuiteResult res{"likelihood-oracle", true, 0.0, 1e-10, {}};
  Rng rng = make_stream(seed, 1);
  std::size_t neg_inf = 0;
  for (std::size_t t = 0; t < instances; ++t) {
    auto inst = oracle::random_instance(rng);
    auto [state, rates] = to_state(inst);
    double fast = log_likelihood(state, rates, {inst.shape, inst.rate}) + perturb;
    double slow = oracle::naive_log_likelihood(inst);
    if (slow == kNegInf) ++neg_inf;
    double gap = detail::log_gap(fast, slow);
    res.metric = std::max(res.metric, gap);
  }
  res.passed = res.metric <= res.tolerance;
  res.detail = std::to_string(instances) + " instances, " + std::to_string(neg_inf) + " with zero density";
  return res;
}

/// One random valid single-farm change of an instance: (farm, new time).
/// Returns false when the drawn farm admits no change.
inline bool random_single_move(const AugmentedState& s, Rng& rng, std::size_t& farm, double& time) {
  const std::size_t n = s.size();
  farm = uniform_index(n, rng);
  const FarmSet set = s.set_of(farm);
  if (set == FarmSet::A) return false;
  double earliest_other = kNever;
  for (std::size_t k = 0; k < n; ++k)
    if (k != s.omega && s.infected(k)) earliest_other = std::min(earliest_other, s.infection[k]);
  if (farm == s.omega) {
    const double hi = std::min(earliest_other, s.removal(farm));
    time = hi - 3.0 * uniform01(rng);
    return time < hi;
  }
  if (set == FarmSet::C && uniform01(rng) < 0.4) {
    time = kNever;
    return true;
  }
  const double lo = s.i_omega(), hi = s.removal(farm);
  if (!(hi > lo)) return false;
  time = lo + (hi - lo) * uniform01(rng);
  return time > lo && time < hi;
}

/// Incremental deltas against full re-evaluation, chaining commits so the
/// caches are exercised across many changes.
inline SuiteResult delta_contract_suite(std::size_t moves, std::uint64_t seed, double perturb = 0.0) {
  SuiteResult res{"delta-contract", true, 0.0, 1e-9, {}};
  Rng rng = make_stream(seed, 2);
  std::size_t done = 0, rejected_inf = 0;
  while (done < moves) {
    auto inst = oracle::random_instance(rng, 6, 4, 0.0);
    auto [state, table] = to_state(inst);
    auto rates = std::make_shared<const RateTable>(std::move(table));
    InfectiousPeriodParams params{inst.shape, inst.rate};
    LikelihoodEvaluator eval(state, rates, params);
    if (!std::isfinite(eval.total())) continue;
    for (int step = 0; step < 8 && done < moves; ++step) {
      std::size_t j = 0;
      double t = 0.0;
      if (!random_single_move(eval.state(), rng, j, t)) continue;
      auto ch = eval.propose(j, t);
      AugmentedState next = eval.state();
      next.infection[j] = t;
      const double before = log_likelihood(eval.state(), *rates, params);
      const double after = log_likelihood(next, *rates, params);
      ++done;
      const double delta = ch.delta + perturb;
      if (after == kNegInf) {
        ++rejected_inf;
        if (delta != kNegInf) res.metric = kNever;
        continue;
      }
      res.metric = std::max(res.metric, std::fabs((after - before) - delta));
      eval.commit(ch);
      res.metric = std::max(res.metric, std::fabs(eval.total() - after));
    }
  }
  res.passed = res.metric <= res.tolerance;
  res.detail = std::to_string(moves) + " moves, " + std::to_string(rejected_inf) + " into zero density";
  return res;
}

/// Random symmetric positive definite kernel matrix of size <= 20 and a
/// random (g, g', delta) tuple.
inline SuiteResult proposal_identity_suite(std::size_t tuples, std::uint64_t seed) {
  SuiteResult res{"proposal-identity", true, 0.0, 1e-8, {}};
  Rng rng = make_stream(seed, 3);
  for (std::size_t t = 0; t < tuples; ++t) {
    const std::size_t n = 1 + uniform_index(20, rng);
    std::vector<double> d(n);
    for (auto& v : d) v = 20.0 * uniform01(rng);
    std::sort(d.begin(), d.end());
    KernelParams kp{0.5 + 9.0 * uniform01(rng), 0.5 + 5.0 * uniform01(rng)};
    auto cov = CovarianceMatrix::build(d, kp);
    double delta = 1.0 - uniform01(rng);  // (0, 1]
    Eigen::VectorXd g = sample_prior(cov, rng);
    Eigen::VectorXd gp = underrelaxed_propose(g, delta, cov, rng);
    auto pair = proposal_log_ratio_identity(g, gp, delta, cov);
    res.metric = std::max(res.metric, std::fabs(pair.lhs - pair.rhs));
  }
  res.passed = res.metric <= res.tolerance;
  res.detail = std::to_string(tuples) + " tuples of dimension 1..20";
  return res;
}

// --------------------------------------------------------------------------
// Prior reproduction

struct MarginalCheck {
  std::string name;
  std::size_t samples = 0;
  double ess = 0.0;
  double mean = 0.0;
  double mean_error = 0.0;  // relative to the prior mean
  double ks = 0.0;          // sup |F_n - F|
  double ks_critical = 0.0; // 1% level for `samples` draws
};

/// Effective sample size from Geyer's initial positive sequence.
inline double effective_sample_size(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 4) return static_cast<double>(n);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  if (var == 0.0) return static_cast<double>(n);
  auto rho = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - mean) * (x[i + lag] - mean);
    return s / (static_cast<double>(n) * var);
  };
  double tau = -1.0;
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  return static_cast<double>(n) / std::max(tau, 1.0 / static_cast<double>(n));
}

inline double ks_exponential(std::vector<double> x, double rate) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double f = 1.0 - std::exp(-rate * std::max(0.0, x[i]));
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

inline MarginalCheck check_exponential(std::string name, const std::vector<double>& x, double rate) {
  MarginalCheck c;
  c.name = std::move(name);
  c.samples = x.size();
  c.ess = effective_sample_size(x);
  double m = 0.0;
  for (double v : x) m += v;
  c.mean = m / static_cast<double>(x.size());
  c.mean_error = std::fabs(c.mean * rate - 1.0);
  c.ks = ks_exponential(x, rate);
  // Autocorrelated draws: judge KS at the effective sample size.
  c.ks_critical = 1.628 / std::sqrt(std::min(c.ess, static_cast<double>(x.size())));
  return c;
}

struct PriorReproduction {
  std::vector<MarginalCheck> checks;  // gamma, l, -i_omega
  bool passed(double min_ess) const {
    for (const auto& c : checks)
      if (!(c.mean_error <= 0.05 && c.ks <= c.ks_critical && c.ess >= min_ess)) return false;
    return true;
  }
};

/// Two farms: the initial case culled at t = 0 and a never-culled farm
/// 3 km away. Pseudo grid {0, 5}.
inline Dataset prior_test_dataset() {
  Dataset d;
  FarmRecord a;
  a.id = 1;
  a.cull_time = 0.0;
  FarmRecord b;
  b.id = 2;
  b.x = 3.0;
  d.farms = {a, b};
  d.time_origin = "day 0";
  return d;
}

/// Samples with the likelihood switched off and compares the retained
/// gamma, l and -i_omega draws with their exponential priors.
inline PriorReproduction run_prior_reproduction(std::size_t retained, std::size_t thinning, std::uint64_t seed) {
  Dataset data = prior_test_dataset();
  SamplerConfig cfg;
  cfg.likelihood_enabled = false;
  cfg.grid.knots = {0.0, 5.0};
  cfg.initial_l = 100.0;
  cfg.prior.alpha = 1.0;
  cfg.tuning.delta = 1.0;
  cfg.tuning.sigma_l = 250.0;
  cfg.tuning.sigma_gamma = 250.0;
  cfg.tuning.sigma_i_omega = 250.0;
  cfg.tuning.moves_per_iteration = 0;
  cfg.tuning.burn_in = 1000;
  cfg.tuning.thinning = thinning;
  cfg.tuning.iterations = cfg.tuning.burn_in + retained * thinning;
  cfg.tuning.audit_interval = 0;
  Sampler sampler(data, cfg, make_stream(seed, 4));
  std::vector<double> gam, len, io;
  gam.reserve(retained);
  len.reserve(retained);
  io.reserve(retained);
  run_sweeps(sampler, [&](const TraceRecord& r) {
    gam.push_back(r.gamma);
    len.push_back(r.length_scale);
    io.push_back(-r.i_omega);
  });
  PriorReproduction out;
  out.checks.push_back(check_exponential("gamma", gam, cfg.prior.gamma_rate));
  out.checks.push_back(check_exponential("l", len, cfg.prior.l_rate));
  out.checks.push_back(check_exponential("-i_omega", io, cfg.prior.i_omega_rate));
  return out;
}

inline SuiteResult prior_reproduction_suite(std::size_t sweeps, std::uint64_t seed, double min_ess = 1e5) {
  const std::size_t thinning = 10;
  const std::size_t retained = std::max<std::size_t>(sweeps / thinning, 100);
  auto rep = run_prior_reproduction(retained, thinning, seed);
  SuiteResult res{"prior-reproduction", rep.passed(min_ess), 0.0, 0.05, {}};
  for (const auto& c : rep.checks) {
    res.metric = std::max(res.metric, c.mean_error);
    res.detail += c.name + ": mean " + std::to_string(c.mean) + ", KS " + std::to_string(c.ks) + " (crit " +
                  std::to_string(c.ks_critical) + "), ESS " + std::to_string(static_cast<long>(c.ess)) + "; ";
  }
  return res;
}

}  // namespace gpepi

#endif  // GPEPI_VALIDATE_HPP
