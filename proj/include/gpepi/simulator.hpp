#ifndef GPEPI_SIMULATOR_HPP
#define GPEPI_SIMULATOR_HPP

// Continuous-time simulation of the spatial SIR process with ring culling.
// Next-event scheme over the aggregated susceptible hazards; natural
// removals come from a priority queue.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "gpepi/core.hpp"
#include "gpepi/data.hpp"
#include "gpepi/likelihood.hpp"
#include "gpepi/rates.hpp"

namespace gpepi {

enum class PolicyMode { none, simple_ring, capped_ring };

inline std::string_view to_string(PolicyMode m) {
  switch (m) {
    case PolicyMode::none: return "none";
    case PolicyMode::simple_ring: return "simple_ring";
    case PolicyMode::capped_ring: return "capped_ring";
  }
  return "?";
}

inline PolicyMode parse_policy_mode(std::string_view s) {
  if (s == "none") return PolicyMode::none;
  if (s == "simple_ring") return PolicyMode::simple_ring;
  if (s == "capped_ring") return PolicyMode::capped_ring;
  throw InputError("unknown culling policy mode '" + std::string(s) + "'");
}

/// Applies while the cumulative number of infections is <= bound.
struct CapRow {
  double bound = kNever;
  int max_per_day = 0;
  double fraction = 1.0;
};

/// Resource-limited schedule used for the predictive culling study.
inline std::vector<CapRow> default_cap_rows() {
  return {{33.0, 0, 0.0}, {54.0, 3, 0.5}, {kNever, 6, 1.0}};
}

struct CullingPolicy {
  PolicyMode mode = PolicyMode::none;
  double radius = 0.0;  // km
  std::vector<CapRow> rows = default_cap_rows();

  static CullingPolicy none() { return {}; }
  static CullingPolicy simple_ring(double radius) { return {PolicyMode::simple_ring, radius, {}}; }
  static CullingPolicy capped_ring(double radius, std::vector<CapRow> rows = default_cap_rows()) {
    return {PolicyMode::capped_ring, radius, std::move(rows)};
  }

  void validate() const {
    if (!(radius >= 0.0)) throw InputError("culling radius must be >= 0");
    if (mode != PolicyMode::capped_ring) return;
    if (rows.empty()) throw InputError("capped ring policy needs at least one threshold row");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].max_per_day < 0) throw InputError("daily cull cap must be >= 0");
      if (!(rows[i].fraction >= 0.0 && rows[i].fraction <= 1.0))
        throw InputError("radius fraction must lie in [0, 1]");
      if (i > 0 && !(rows[i].bound > rows[i - 1].bound))
        throw InputError("threshold rows must be ordered by increasing bound");
    }
  }

  const CapRow* row_for(std::size_t infections) const {
    for (const auto& r : rows)
      if (static_cast<double>(infections) <= r.bound) return &r;
    return nullptr;
  }
};

/// Euros per bird, indexed by FlockType.
struct CompensationTable {
  std::array<double, 4> euros_per_bird{0.98, 2.09, 10.63, 2.05};

  double rate(FlockType t) const { return euros_per_bird[static_cast<std::size_t>(t)]; }
  void validate() const {
    for (double v : euros_per_bird)
      if (!(v >= 0.0)) throw InputError("compensation rates must be >= 0");
  }
};

enum class EventKind { infection, natural_cull, preemptive_cull };

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::infection: return "infection";
    case EventKind::natural_cull: return "natural_cull";
    case EventKind::preemptive_cull: return "preemptive_cull";
  }
  return "?";
}

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::infection;
  std::size_t farm = 0;  // dataset index
};

/// Event log and ground truth of one simulated outbreak. Times are on the
/// simulation clock (the initial case is infected at t = 0).
struct OutbreakResult {
  std::vector<Event> events;
  std::vector<FarmSet> truth;
  std::vector<double> infection;
  std::vector<double> removal;
  std::size_t omega = 0;

  std::size_t count(FarmSet s) const { return static_cast<std::size_t>(std::count(truth.begin(), truth.end(), s)); }
  std::size_t infected() const { return count(FarmSet::B) + count(FarmSet::C); }
  std::size_t culled() const { return infected() + count(FarmSet::D); }

  /// Time of the first natural cull; the observed time origin.
  double first_natural_cull() const {
    double t = kNever;
    for (std::size_t j = 0; j < truth.size(); ++j)
      if (truth[j] == FarmSet::B) t = std::min(t, removal[j]);
    return t;
  }
};

namespace detail {

struct PendingRemoval {
  double time;
  std::size_t farm;
  bool operator>(const PendingRemoval& o) const {
    return time != o.time ? time > o.time : farm > o.farm;
  }
};

}  // namespace detail

/// Simulates one outbreak started by `omega`. `rates` must cover every pair
/// (zero entries are allowed). Requires non-negative rates.
inline OutbreakResult simulate_outbreak(const Dataset& data, const RateTable& rates,
                                        const InfectiousPeriodParams& params, std::size_t omega,
                                        const CullingPolicy& policy, Rng& rng) {
  params.validate();
  policy.validate();
  const std::size_t n = data.size();
  if (rates.size() != n) throw InputError("rate table size does not match the dataset");
  if (omega >= n) throw InputError("initial case index out of range");

  enum class Status : unsigned char { S, I, R };
  std::vector<Status> status(n, Status::S);
  std::vector<double> hazard(n, 0.0);
  // infectious farms with a positive rate to each farm; zero forces the
  // hazard to exactly zero despite subtraction round-off
  std::vector<int> sources(n, 0);
  OutbreakResult out;
  out.omega = omega;
  out.truth.assign(n, FarmSet::A);
  out.infection.assign(n, kNever);
  out.removal.assign(n, kNever);
  std::priority_queue<detail::PendingRemoval, std::vector<detail::PendingRemoval>, std::greater<>> queue;
  DistanceIndex dist(data);

  std::size_t infectives = 0, cumulative = 0;
  double now = 0.0;

  auto infect = [&](std::size_t j, double t) {
    status[j] = Status::I;
    hazard[j] = 0.0;
    out.infection[j] = t;
    out.events.push_back({t, EventKind::infection, j});
    ++infectives;
    ++cumulative;
    auto row = rates.row(j);
    for (std::size_t k = 0; k < n; ++k)
      if (status[k] == Status::S && row[k] > 0.0) {
        hazard[k] += row[k];
        ++sources[k];
      }
    queue.push({t + gamma_draw(params.shape, params.rate, rng), j});
  };

  auto remove = [&](std::size_t j, double t, bool natural) {
    const bool was_infectious = status[j] == Status::I;
    status[j] = Status::R;
    out.removal[j] = t;
    out.events.push_back({t, natural ? EventKind::natural_cull : EventKind::preemptive_cull, j});
    if (natural) out.truth[j] = FarmSet::B;
    else out.truth[j] = was_infectious ? FarmSet::C : FarmSet::D;
    hazard[j] = 0.0;
    if (!was_infectious) return;
    --infectives;
    auto row = rates.row(j);
    for (std::size_t k = 0; k < n; ++k)
      if (status[k] == Status::S && row[k] > 0.0)
        hazard[k] = --sources[k] == 0 ? 0.0 : std::max(0.0, hazard[k] - row[k]);
  };

  long cull_day = std::numeric_limits<long>::min();
  int culled_today = 0;
  auto ring_cull = [&](std::size_t center, double t) {
    if (policy.mode == PolicyMode::none || !(policy.radius > 0.0)) return;
    double reach = policy.radius;
    int allowance = std::numeric_limits<int>::max();
    if (policy.mode == PolicyMode::capped_ring) {
      const CapRow* row = policy.row_for(cumulative);
      if (!row) return;
      reach *= row->fraction;
      long day = static_cast<long>(std::floor(t));
      if (day != cull_day) {
        cull_day = day;
        culled_today = 0;
      }
      allowance = row->max_per_day - culled_today;
    }
    if (allowance <= 0 || !(reach > 0.0)) return;
    std::vector<std::pair<double, std::size_t>> targets;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == center || status[k] == Status::R) continue;
      double d = dist(center, k);
      if (d <= reach) targets.emplace_back(d, k);
    }
    std::sort(targets.begin(), targets.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return data.farms[a.second].id < data.farms[b.second].id;
    });
    if (targets.size() > static_cast<std::size_t>(allowance)) targets.resize(static_cast<std::size_t>(allowance));
    for (const auto& [d, k] : targets) {
      remove(k, t, false);
      ++culled_today;
    }
  };

  infect(omega, 0.0);
  while (infectives > 0) {
    while (!queue.empty() && status[queue.top().farm] != Status::I) queue.pop();
    const double next_removal = queue.empty() ? kNever : queue.top().time;
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) total += hazard[k];
    const double next_infection = total > 0.0 ? now + exponential_draw(total, rng) : kNever;
    if (next_removal <= next_infection) {
      std::size_t j = queue.top().farm;
      queue.pop();
      now = next_removal;
      remove(j, now, true);
      ring_cull(j, now);
    } else {
      now = next_infection;
      double pick = uniform01(rng) * total, acc = 0.0;
      std::size_t chosen = n;
      for (std::size_t k = 0; k < n; ++k) {
        if (hazard[k] <= 0.0) continue;
        acc += hazard[k];
        chosen = k;
        if (pick < acc) break;
      }
      infect(chosen, now);
    }
  }
  return out;
}

/// Euros paid for every culled farm (natural and pre-emptive).
inline double compensation(const OutbreakResult& result, const Dataset& data, const CompensationTable& table) {
  table.validate();
  double total = 0.0;
  std::vector<FarmId> missing;
  for (std::size_t j = 0; j < result.truth.size(); ++j) {
    if (result.truth[j] == FarmSet::A) continue;
    const auto& f = data.farms[j];
    if (!f.flock_type || !f.flock_size) {
      missing.push_back(f.id);
      continue;
    }
    total += table.rate(*f.flock_type) * *f.flock_size;
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "missing flock data for culled farm(s):";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg << ' ' << missing[i];
    if (missing.size() > 20) msg << " ... (" << missing.size() << " total)";
    throw InputError(msg.str());
  }
  return total;
}

/// Observed dataset: coordinates, flock data, cull times and pre-emptive
/// flags only, with the time origin at the first natural cull.
inline Dataset export_observed(const OutbreakResult& result, const Dataset& layout) {
  Dataset out;
  out.farms = layout.farms;
  const double shift = result.first_natural_cull();
  for (std::size_t j = 0; j < out.farms.size(); ++j) {
    auto& f = out.farms[j];
    const FarmSet s = result.truth[j];
    f.cull_time = s == FarmSet::A ? kNever : result.removal[j] - shift;
    f.preemptive = s == FarmSet::C || s == FarmSet::D;
  }
  out.time_origin = "day 0";
  return out;
}

/// Sum of infection times of culled farms on the observed time axis.
inline double truth_infection_sum(const OutbreakResult& result) {
  const double shift = result.first_natural_cull();
  double s = 0.0;
  for (std::size_t j = 0; j < result.truth.size(); ++j)
    if (result.truth[j] == FarmSet::B || result.truth[j] == FarmSet::C) s += result.infection[j] - shift;
  return s;
}

inline void write_event_log(std::ostream& out, const OutbreakResult& result, const Dataset& data) {
  out << "time,event,id\n";
  const double shift = result.first_natural_cull();
  for (const auto& e : result.events)
    out << detail::format_double(e.time - shift) << ',' << to_string(e.kind) << ',' << data.farms[e.farm].id << '\n';
}

/// Ground truth on the observed time axis: id, set, infection, removal.
inline void write_truth(std::ostream& out, const OutbreakResult& result, const Dataset& data) {
  out << "id,set,infection_time,removal_time\n";
  const double shift = result.first_natural_cull();
  for (std::size_t j = 0; j < result.truth.size(); ++j) {
    out << data.farms[j].id << ',' << to_char(result.truth[j]) << ',';
    if (happened(result.infection[j])) out << detail::format_double(result.infection[j] - shift);
    out << ',';
    if (happened(result.removal[j])) out << detail::format_double(result.removal[j] - shift);
    out << '\n';
  }
}

struct TruthRecord {
  FarmId id = 0;
  FarmSet set = FarmSet::A;
  double infection = kNever;
  double removal = kNever;
};

inline std::vector<TruthRecord> read_truth(std::istream& in) {
  std::vector<TruthRecord> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (row == 1 || detail::trim(line).empty()) continue;
    auto cells = detail::split(line, ',');
    if (cells.size() != 4) throw InputError("truth file row " + std::to_string(row) + ": expected 4 columns");
    TruthRecord r;
    auto id = detail::parse_double(cells[0]);
    if (!id) throw InputError("truth file row " + std::to_string(row) + ": bad id");
    r.id = static_cast<FarmId>(*id);
    const std::string set = detail::trim(cells[1]);
    if (set.size() != 1 || set[0] < 'A' || set[0] > 'D')
      throw InputError("truth file row " + std::to_string(row) + ": bad set label");
    r.set = static_cast<FarmSet>(set[0] - 'A');
    if (auto v = detail::parse_double(cells[2])) r.infection = *v;
    if (auto v = detail::parse_double(cells[3])) r.removal = *v;
    out.push_back(r);
  }
  return out;
}

inline double truth_infection_sum(const std::vector<TruthRecord>& truth) {
  double s = 0.0;
  for (const auto& r : truth)
    if (r.set == FarmSet::B || r.set == FarmSet::C) s += r.infection;
  return s;
}

/// Uniform farm layout on a square with random flock composition
/// (type uniform, size uniform on [500, 50000]).
inline Dataset synthetic_layout(std::size_t count, double side_km, Rng& rng) {
  if (count == 0) throw InputError("synthetic layout needs at least one farm");
  if (!(side_km > 0.0)) throw InputError("synthetic layout side must be > 0");
  Dataset d;
  d.farms.resize(count);
  for (std::size_t j = 0; j < count; ++j) {
    auto& f = d.farms[j];
    f.id = static_cast<FarmId>(j + 1);
    f.x = side_km * uniform01(rng);
    f.y = side_km * uniform01(rng);
    f.flock_type = static_cast<FlockType>(uniform_index(4, rng));
    f.flock_size = static_cast<double>(500 + uniform_index(49501, rng));
  }
  d.time_origin = "day 0";
  return d;
}

}  // namespace gpepi

#endif  // GPEPI_SIMULATOR_HPP
