#ifndef GPEPI_POSTERIOR_HPP
#define GPEPI_POSTERIOR_HPP

// Trace summaries and posterior-predictive policy evaluation. All
// quantiles are type-1 (inverse of the empirical CDF, no interpolation):
// q(p) = x_(ceil(n p)).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "gpepi/core.hpp"
#include "gpepi/data.hpp"
#include "gpepi/gp.hpp"
#include "gpepi/rates.hpp"
#include "gpepi/simulator.hpp"
#include "gpepi/trace.hpp"

namespace gpepi {

inline double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InputError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InputError("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(n * p));
  if (rank == 0) rank = 1;
  return values[std::min(rank, values.size()) - 1];
}

struct Interval {
  double lower = 0.0;
  double median = 0.0;
  double upper = 0.0;
};

/// Median and central 95% interval.
inline Interval summarize(const std::vector<double>& values) {
  return {quantile(values, 0.025), quantile(values, 0.5), quantile(values, 0.975)};
}

struct CurveSummary {
  std::vector<double> knots;
  std::vector<double> lower, median, upper;
};

namespace detail {

/// Projectors from the pseudo grid to `targets`, one per distinct length
/// scale seen in the trace.
class ProjectorCache {
 public:
  ProjectorCache(std::vector<double> grid, std::vector<double> targets, double alpha)
      : grid_(std::move(grid)), targets_(std::move(targets)), alpha_(alpha) {}

  const Projector& at(double l) {
    auto it = cache_.find(l);
    if (it == cache_.end())
      it = cache_.emplace(l, build_projector(targets_, grid_, {alpha_, l})).first;
    return it->second;
  }

 private:
  std::vector<double> grid_, targets_;
  double alpha_;
  std::map<double, Projector> cache_;
};

inline Eigen::VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

/// Pointwise quantiles of beta = exp(projected g) at `knots`.
inline CurveSummary summarize_curve(const ChainTrace& trace, const std::vector<double>& knots) {
  if (trace.records.empty()) throw InputError("cannot summarise an empty trace");
  if (knots.empty()) throw InputError("no distances requested for the curve summary");
  detail::ProjectorCache cache(trace.header.knots, knots, trace.header.alpha);
  std::vector<std::vector<double>> columns(knots.size());
  for (const auto& r : trace.records) {
    Eigen::VectorXd g = cache.at(r.length_scale).project(detail::as_vector(r.g_bar));
    for (std::size_t k = 0; k < knots.size(); ++k) columns[k].push_back(std::exp(g[static_cast<Eigen::Index>(k)]));
  }
  CurveSummary out;
  out.knots = knots;
  for (const auto& c : columns) {
    Interval s = summarize(c);
    out.lower.push_back(s.lower);
    out.median.push_back(s.median);
    out.upper.push_back(s.upper);
  }
  return out;
}

/// Fraction of retained sweeps in which each pre-emptively culled farm
/// carried an infection time.
inline std::vector<std::pair<FarmId, double>> infection_probabilities(const ChainTrace& trace) {
  if (trace.records.empty()) throw InputError("cannot summarise an empty trace");
  std::map<FarmId, std::size_t> hits;
  for (auto id : trace.header.preemptive_ids) hits[id] = 0;
  for (const auto& r : trace.records)
    for (auto id : r.c_ids) {
      auto it = hits.find(id);
      if (it == hits.end()) throw InputError("trace flags farm " + std::to_string(id) + " which is not pre-emptive");
      ++it->second;
    }
  std::vector<std::pair<FarmId, double>> out;
  const double n = static_cast<double>(trace.records.size());
  for (auto id : trace.header.preemptive_ids) out.emplace_back(id, static_cast<double>(hits[id]) / n);
  return out;
}

/// Median over sweeps of the summed finite infection times.
inline double posterior_median_infection_sum(const ChainTrace& trace) {
  if (trace.records.empty()) throw InputError("cannot summarise an empty trace");
  std::vector<double> sums;
  sums.reserve(trace.records.size());
  for (const auto& r : trace.records) {
    double s = 0.0;
    for (const auto& [id, t] : r.infection) s += t;
    sums.push_back(s);
  }
  return quantile(std::move(sums), 0.5);
}

/// Relative percentage error (S - S_hat) / S * 100.
inline double i_tilde(double truth_sum, double estimated_sum) {
  if (truth_sum == 0.0) throw InputError("true infection-time sum is zero; relative error undefined");
  return (truth_sum - estimated_sum) / truth_sum * 100.0;
}

inline double i_tilde(double truth_sum, const ChainTrace& trace) {
  return i_tilde(truth_sum, posterior_median_infection_sum(trace));
}

inline Interval mean_infectious_period(const ChainTrace& trace, double lambda) {
  if (trace.records.empty()) throw InputError("cannot summarise an empty trace");
  std::vector<double> v;
  for (const auto& r : trace.records) v.push_back(lambda / r.gamma);
  return summarize(v);
}

struct ScalarSummary {
  Interval gamma, mean_period, length_scale, i_omega;
};

inline ScalarSummary summarize_scalars(const ChainTrace& trace) {
  if (trace.records.empty()) throw InputError("cannot summarise an empty trace");
  std::vector<double> g, l, io;
  for (const auto& r : trace.records) {
    g.push_back(r.gamma);
    l.push_back(r.length_scale);
    io.push_back(r.i_omega);
  }
  return {summarize(g), mean_infectious_period(trace, trace.header.lambda), summarize(l), summarize(io)};
}

// --------------------------------------------------------------------------
// Posterior predictive

struct PredictiveOptions {
  std::vector<CullingPolicy> policies;
  std::size_t replicates_per_draw = 1;
  std::size_t max_draws = 0;  // 0 uses every retained sweep
  std::uint64_t seed = 0;
  unsigned workers = 1;
  CompensationTable compensation;
};

struct PredictiveReplicate {
  std::size_t draw = 0;  // index into the trace records
  std::size_t replicate = 0;
  std::size_t infected = 0;
  std::size_t culled = 0;
  double compensation = 0.0;
};

struct PredictiveRow {
  CullingPolicy policy;
  Interval infected, culled, compensation;
  std::vector<PredictiveReplicate> replicates;
};

struct PredictiveSummary {
  std::size_t omega = 0;  // dataset index of the seeding farm
  std::vector<PredictiveRow> rows;
};

/// The farm culled first in the observed outbreak (natural culls win ties).
inline std::size_t first_culled(const Dataset& data) {
  std::optional<std::size_t> best;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto& f = data.farms[j];
    if (!f.culled()) continue;
    if (!best) {
      best = j;
      continue;
    }
    const auto& b = data.farms[*best];
    if (f.cull_time < b.cull_time || (f.cull_time == b.cull_time && b.preemptive && !f.preemptive)) best = j;
  }
  if (!best) throw InputError("dataset has no culled farm to seed predictive outbreaks");
  return *best;
}

/// Indices of the trace records used as predictive draws.
inline std::vector<std::size_t> predictive_draws(std::size_t records, std::size_t max_draws) {
  std::vector<std::size_t> out;
  if (max_draws == 0 || max_draws >= records) {
    for (std::size_t i = 0; i < records; ++i) out.push_back(i);
    return out;
  }
  for (std::size_t i = 0; i < max_draws; ++i) out.push_back(i * records / max_draws);
  return out;
}

/// Simulates outbreaks from (g, gamma) pairs of the same retained sweep,
/// seeded at the first-culled farm, under each policy.
inline PredictiveSummary posterior_predictive(const ChainTrace& trace, const Dataset& data,
                                              const PredictiveOptions& opt) {
  if (trace.records.empty()) throw InputError("cannot predict from an empty trace");
  if (trace.header.farm_count != data.size())
    throw InputError("trace was fitted to " + std::to_string(trace.header.farm_count) + " farms but the dataset has " +
                     std::to_string(data.size()));
  if (opt.policies.empty()) throw InputError("no culling policies to evaluate");
  if (opt.replicates_per_draw == 0) throw InputError("replicates_per_draw must be >= 1");
  for (const auto& p : opt.policies) p.validate();
  opt.compensation.validate();
  {
    std::vector<FarmId> missing;
    for (const auto& f : data.farms)
      if (!f.flock_type || !f.flock_size) missing.push_back(f.id);
    if (!missing.empty()) {
      std::string msg = "flock data missing for " + std::to_string(missing.size()) + " farm(s), e.g.";
      for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += " " + std::to_string(missing[i]);
      throw InputError(msg);
    }
  }

  PredictiveSummary out;
  out.omega = first_culled(data);
  const DistanceIndex dist(data);
  const PairDistances pairs = PairDistances::all(dist);
  const auto draws = predictive_draws(trace.records.size(), opt.max_draws);

  std::vector<double> targets = pairs.unique_distances();
  if (!targets.empty() && targets.back() > trace.header.knots.back() * (1.0 + 1e-9))
    throw InputError("dataset distances exceed the fitted pseudo grid");
  detail::ProjectorCache cache(trace.header.knots, targets, trace.header.alpha);
  for (auto d : draws) cache.at(trace.records[d].length_scale);  // read-only from here on

  const std::size_t reps = opt.replicates_per_draw;
  out.rows.resize(opt.policies.size());
  for (std::size_t pi = 0; pi < opt.policies.size(); ++pi) {
    out.rows[pi].policy = opt.policies[pi];
    out.rows[pi].replicates.resize(draws.size() * reps);
  }
  parallel_for(draws.size(), opt.workers, [&](std::size_t di) {
    const auto& rec = trace.records[draws[di]];
    RateTable table(data.size());
    pairs.fill(cache.at(rec.length_scale).project(detail::as_vector(rec.g_bar)), table);
    for (std::size_t pi = 0; pi < opt.policies.size(); ++pi)
      for (std::size_t rep = 0; rep < reps; ++rep) {
        Rng rng = make_stream(opt.seed, pi, draws[di], rep);
        auto result = simulate_outbreak(data, table, {trace.header.lambda, rec.gamma}, out.omega,
                                        opt.policies[pi], rng);
        out.rows[pi].replicates[di * reps + rep] = {draws[di], rep, result.infected(), result.culled(),
                                                    compensation(result, data, opt.compensation)};
      }
  });

  for (auto& row : out.rows) {
    std::vector<double> inf, cul, comp;
    for (const auto& r : row.replicates) {
      inf.push_back(static_cast<double>(r.infected));
      cul.push_back(static_cast<double>(r.culled));
      comp.push_back(r.compensation);
    }
    row.infected = summarize(inf);
    row.culled = summarize(cul);
    row.compensation = summarize(comp);
  }
  return out;
}

/// Re-runs one predictive replicate; used to audit a reported row.
inline OutbreakResult replay_predictive(const ChainTrace& trace, const Dataset& data, const PredictiveOptions& opt,
                                        std::size_t policy_index, std::size_t draw, std::size_t replicate) {
  const auto& rec = trace.records.at(draw);
  const DistanceIndex dist(data);
  const PairDistances pairs = PairDistances::all(dist);
  RateTable t(data.size());
  pairs.fill(build_projector(pairs.unique_distances(), trace.header.knots, {trace.header.alpha, rec.length_scale})
                 .project(detail::as_vector(rec.g_bar)),
             t);
  Rng rng = make_stream(opt.seed, policy_index, draw, replicate);
  return simulate_outbreak(data, t, {trace.header.lambda, rec.gamma}, first_culled(data),
                           opt.policies.at(policy_index), rng);
}

}  // namespace gpepi

#endif  // GPEPI_POSTERIOR_HPP
