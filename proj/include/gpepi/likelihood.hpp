#ifndef GPEPI_LIKELIHOOD_HPP
#define GPEPI_LIKELIHOOD_HPP

// Augmented-data log-likelihood of the spatial SIR model with pre-emptive
// culling:
//
//   log L = -Psi + sum_{j infected, j != omega} log phi_j
//               + sum_{j in B} log p(r_j - i_j) + sum_{j in C} log S(r_j - i_j)
//
// Psi is the integrated pressure over infector/target pairs and phi_j the
// hazard on j at its infection instant. Self-pairs are excluded.

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpepi/core.hpp"
#include "gpepi/data.hpp"
#include "gpepi/rates.hpp"

namespace gpepi {

struct InfectiousPeriodParams {
  double shape = 1.0;  // lambda
  double rate = 1.0;   // gamma, 1/days

  double mean() const { return shape / rate; }
  void validate() const {
    if (!(shape > 0.0) || !std::isfinite(shape)) throw InputError("gamma shape must be > 0");
    if (!(rate > 0.0) || !std::isfinite(rate)) throw InputError("gamma rate must be > 0");
  }
};

inline double gamma_log_pdf(double x, const InfectiousPeriodParams& p) {
  if (x < 0.0) throw InputError("gamma density evaluated at negative time");
  if (x == 0.0) {
    if (p.shape > 1.0) return kNegInf;
    if (p.shape == 1.0) return std::log(p.rate);
    return std::numeric_limits<double>::infinity();
  }
  return p.shape * std::log(p.rate) + (p.shape - 1.0) * std::log(x) - p.rate * x -
         std::lgamma(p.shape);
}

inline double gamma_pdf(double x, const InfectiousPeriodParams& p) {
  return std::exp(gamma_log_pdf(x, p));
}

inline double gamma_survivor(double x, const InfectiousPeriodParams& p) {
  if (x < 0.0) throw InputError("gamma survivor evaluated at negative time");
  if (x == 0.0) return 1.0;
  return boost::math::gamma_q(p.shape, p.rate * x);
}

inline double gamma_log_survivor(double x, const InfectiousPeriodParams& p) {
  return std::log(gamma_survivor(x, p));
}

// --------------------------------------------------------------------------
// Augmented state

/// End-of-outbreak set membership.
enum class FarmSet { A, B, C, D };

inline char to_char(FarmSet s) { return "ABCD"[static_cast<int>(s)]; }

/// Infection and culling times for every farm plus the initial case. A
/// pre-emptively culled farm belongs to C exactly when it has a finite
/// infection time.
struct AugmentedState {
  std::vector<double> infection;        // i_j, kNever if never infected
  std::vector<double> natural_cull;     // r^c_j
  std::vector<double> preemptive_cull;  // r^p_j
  std::size_t omega = 0;

  std::size_t size() const { return infection.size(); }
  double removal(std::size_t j) const { return std::min(natural_cull[j], preemptive_cull[j]); }
  bool infected(std::size_t j) const { return happened(infection[j]); }
  bool preemptive(std::size_t j) const { return happened(preemptive_cull[j]); }
  double i_omega() const { return infection[omega]; }

  FarmSet set_of(std::size_t j) const {
    if (happened(natural_cull[j])) return FarmSet::B;
    if (happened(preemptive_cull[j])) return infected(j) ? FarmSet::C : FarmSet::D;
    return FarmSet::A;
  }

  /// Observed part of a dataset; every infection time starts at kNever.
  static AugmentedState from_dataset(const Dataset& data) {
    AugmentedState s;
    const std::size_t n = data.size();
    s.infection.assign(n, kNever);
    s.natural_cull.assign(n, kNever);
    s.preemptive_cull.assign(n, kNever);
    for (std::size_t j = 0; j < n; ++j) {
      const auto& f = data.farms[j];
      if (!f.culled()) continue;
      (f.preemptive ? s.preemptive_cull : s.natural_cull)[j] = f.cull_time;
    }
    return s;
  }

  /// Throws StateError on structural inconsistency. Zero-density but
  /// well-formed states (e.g. an infection nobody could have caused) pass.
  void validate() const {
    const std::size_t n = size();
    if (natural_cull.size() != n || preemptive_cull.size() != n)
      throw StateError("augmented state vectors differ in length");
    if (omega >= n) throw StateError("initial case index out of range");
    if (!infected(omega)) throw StateError("initial case has no infection time");
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(infection[j]) || std::isnan(natural_cull[j]) || std::isnan(preemptive_cull[j]))
        throw StateError("NaN time for farm index " + std::to_string(j));
      if (happened(natural_cull[j]) && happened(preemptive_cull[j]))
        throw StateError("farm index " + std::to_string(j) + " has both natural and pre-emptive culls");
      FarmSet s = set_of(j);
      if (s == FarmSet::A && infected(j))
        throw StateError("farm index " + std::to_string(j) + " is infected but never culled");
      if (s == FarmSet::B && !infected(j))
        throw StateError("naturally culled farm index " + std::to_string(j) + " has no infection time");
      if (infected(j) && infection[j] > removal(j))
        throw StateError("farm index " + std::to_string(j) + " is infected after its removal");
      if (infection[j] < infection[omega])
        throw StateError("farm index " + std::to_string(j) + " is infected before the initial case");
    }
  }
};

// --------------------------------------------------------------------------
// Elementary terms

struct FarmTimes {
  double infection = kNever;
  double removal = kNever;
};

/// beta * (time during which `infector` could have infected `target`).
inline double avoidance_exponent(double beta, const FarmTimes& infector, const FarmTimes& target,
                                 bool target_in_D) {
  const double end = target_in_D ? target.removal : target.infection;
  const double span = std::min(infector.removal, end) - std::min(infector.infection, end);
  if (span < 0.0 || std::isnan(span))
    throw StateError("negative exposure interval; augmented state is corrupted");
  if (span == 0.0) return 0.0;
  return beta * span;
}

namespace detail {

/// min(i_k, r_k): the instant target k stops being exposed.
inline double exposure_end(const AugmentedState& s, std::size_t k) {
  return std::min(s.infection[k], s.removal(k));
}

inline double exposure_span(double inf_j, double rem_j, double end_k) {
  return std::min(rem_j, end_k) - std::min(inf_j, end_k);
}

}  // namespace detail

/// Psi: total integrated infectious pressure.
inline double total_pressure(const AugmentedState& s, const RateTable& rates) {
  double psi = 0.0;
  const std::size_t n = s.size();
  for (std::size_t j = 0; j < n; ++j) {
    if (!s.infected(j)) continue;
    const double ij = s.infection[j], rj = s.removal(j);
    auto row = rates.row(j);
    for (std::size_t k = 0; k < n; ++k) {
      if (k == j || row[k] == 0.0) continue;
      double span = detail::exposure_span(ij, rj, detail::exposure_end(s, k));
      if (span > 0.0) psi += row[k] * span;
    }
  }
  return psi;
}

/// phi_j: summed rate from farms infectious at j's infection instant.
inline double hazard_at_infection(const AugmentedState& s, const RateTable& rates, std::size_t j) {
  if (j == s.omega) throw StateError("the initial case has no infection hazard");
  if (!s.infected(j)) throw StateError("hazard requested for an uninfected farm");
  const double ij = s.infection[j];
  double phi = 0.0;
  auto row = rates.row(j);
  for (std::size_t k = 0; k < s.size(); ++k)
    if (k != j && s.infection[k] < ij && ij < s.removal(k)) phi += row[k];
  return phi;
}

/// Removal contribution: B densities and C survivors.
inline double removal_log_density(const AugmentedState& s, const InfectiousPeriodParams& p) {
  double out = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (!s.infected(j)) continue;
    const double period = s.removal(j) - s.infection[j];
    out += s.set_of(j) == FarmSet::B ? gamma_log_pdf(period, p) : gamma_log_survivor(period, p);
  }
  return out;
}

struct LikelihoodTerms {
  double pressure = 0.0;     // Psi
  double log_hazards = 0.0;  // sum of log phi_j
  double log_removal = 0.0;  // B densities + C survivors
  double total() const {
    if (log_hazards == kNegInf || log_removal == kNegInf) return kNegInf;
    return -pressure + log_hazards + log_removal;
  }
};

inline LikelihoodTerms likelihood_terms(const AugmentedState& s, const RateTable& rates,
                                        const InfectiousPeriodParams& p) {
  s.validate();
  if (rates.size() != s.size()) throw StateError("rate table size does not match the state");
  LikelihoodTerms t;
  t.pressure = total_pressure(s, rates);
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (!s.infected(j) || j == s.omega) continue;
    double phi = hazard_at_infection(s, rates, j);
    if (phi <= 0.0) {
      t.log_hazards = kNegInf;
      break;
    }
    t.log_hazards += std::log(phi);
  }
  for (std::size_t j = 0; j < s.size(); ++j)
    if (s.infected(j) && s.infection[j] == s.removal(j)) t.log_removal = kNegInf;
  if (t.log_removal != kNegInf) t.log_removal = removal_log_density(s, p);
  return t;
}

/// Full evaluation; -inf for zero-density states, StateError for
/// structurally invalid ones.
inline double log_likelihood(const AugmentedState& s, const RateTable& rates,
                             const InfectiousPeriodParams& p) {
  return likelihood_terms(s, rates, p).total();
}

inline double log_likelihood(const AugmentedState& s, const ParametricRate& rate,
                             const DistanceIndex& dist, const InfectiousPeriodParams& p) {
  return log_likelihood(s, RateTable::from_function(dist, rate), p);
}

// --------------------------------------------------------------------------
// Incremental evaluation

/// Owns an augmented state and keeps the likelihood with per-farm hazard
/// caches, so single infection-time changes cost O(N).
class LikelihoodEvaluator {
 public:
  struct HazardUpdate {
    std::size_t farm;
    double phi;
    int count;
  };

  /// Pending single-farm change produced by propose().
  struct Change {
    std::size_t farm = 0;
    double new_time = kNever;
    double delta = 0.0;  // new total - old total
    double d_pressure = 0.0;
    double d_log_hazards = 0.0;
    double d_log_removal = 0.0;
    bool zero_density = false;
    double own_phi = 0.0;
    int own_count = 0;
    std::vector<HazardUpdate> updates;
  };

  LikelihoodEvaluator() = default;
  LikelihoodEvaluator(AugmentedState state, std::shared_ptr<const RateTable> rates,
                      InfectiousPeriodParams params)
      : state_(std::move(state)), rates_(std::move(rates)), params_(params) {
    rebuild();
  }

  const AugmentedState& state() const { return state_; }
  const RateTable& rates() const { return *rates_; }
  const std::shared_ptr<const RateTable>& rates_ptr() const { return rates_; }
  const InfectiousPeriodParams& params() const { return params_; }
  const LikelihoodTerms& terms() const { return terms_; }
  double total() const { return terms_.total(); }

  /// Cached phi_j (meaningful for infected farms other than omega).
  double hazard(std::size_t j) const { return phi_[j]; }

  void rebuild() {
    state_.validate();
    if (rates_->size() != state_.size()) throw StateError("rate table size does not match the state");
    const std::size_t n = state_.size();
    phi_.assign(n, 0.0);
    count_.assign(n, 0);
    terms_ = {};
    terms_.pressure = total_pressure(state_, *rates_);
    for (std::size_t j = 0; j < n; ++j) {
      if (!state_.infected(j) || j == state_.omega) continue;
      const double ij = state_.infection[j];
      auto row = rates_->row(j);
      for (std::size_t k = 0; k < n; ++k) {
        if (k == j || row[k] == 0.0) continue;
        if (state_.infection[k] < ij && ij < state_.removal(k)) {
          phi_[j] += row[k];
          ++count_[j];
        }
      }
      terms_.log_hazards += count_[j] > 0 ? std::log(phi_[j]) : kNegInf;
    }
    terms_.log_removal = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (state_.infected(j)) terms_.log_removal += removal_term(j, state_.infection[j], params_);
  }

  void set_rates(std::shared_ptr<const RateTable> rates) {
    rates_ = std::move(rates);
    rebuild();
  }

  /// B densities + C survivors of the current state under `p`.
  double removal_log_density(const InfectiousPeriodParams& p) const {
    double out = 0.0;
    for (std::size_t j = 0; j < state_.size(); ++j)
      if (state_.infected(j)) out += removal_term(j, state_.infection[j], p);
    return out;
  }

  void set_params(const InfectiousPeriodParams& p) {
    params_ = p;
    terms_.log_removal = removal_log_density(p);
  }

  /// Replaces the whole state (e.g. an initial-case relabel) and rebuilds.
  void replace_state(AugmentedState s) {
    state_ = std::move(s);
    rebuild();
  }

  /// Effect of setting farm j's infection time to `t` (kNever removes the
  /// infection of a pre-emptively culled farm).
  Change propose(std::size_t j, double t) const {
    const auto& s = state_;
    Change ch;
    ch.farm = j;
    ch.new_time = t;
    const double a = s.infection[j];
    if (a == t) return ch;
    const double rj = s.removal(j);
    const FarmSet set = s.set_of(j);
    const bool inf_old = happened(a), inf_new = happened(t);
    if (std::isnan(t)) throw StateError("NaN infection time proposed");
    if (set == FarmSet::A && inf_new) throw StateError("cannot infect a never-culled farm");
    if (set == FarmSet::B && !inf_new) throw StateError("cannot remove the infection of a naturally culled farm");
    if (j == s.omega && !inf_new) throw StateError("cannot remove the initial case's infection");
    if (inf_new && t > rj) throw StateError("proposed infection after removal");
    if (j != s.omega && t < s.i_omega()) throw StateError("proposed infection before the initial case");
    if (j == s.omega)
      for (std::size_t k = 0; k < s.size(); ++k)
        if (k != j && s.infection[k] < t) throw StateError("initial case moved after another infection");

    const double end_old = std::min(a, rj), end_new = std::min(t, rj);
    const bool is_omega = j == s.omega;
    auto row = rates_->row(j);
    double d_pressure = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double beta = row[k];
      if (k == j || beta == 0.0) continue;
      const double ik = s.infection[k], rk = s.removal(k);
      const double end_k = std::min(ik, rk);
      double d = 0.0;
      if (inf_old) d -= detail::exposure_span(a, rj, end_k);
      if (inf_new) d += detail::exposure_span(t, rj, end_k);
      if (happened(ik)) {
        d += detail::exposure_span(ik, rk, end_new) - detail::exposure_span(ik, rk, end_old);
        if (k != s.omega) {
          const bool was = inf_old && a < ik && ik < rj;
          const bool now = inf_new && t < ik && ik < rj;
          if (was != now) {
            HazardUpdate u{k, now ? phi_[k] + beta : phi_[k] - beta, count_[k] + (now ? 1 : -1)};
            if (u.count == 0) u.phi = 0.0;
            ch.updates.push_back(u);
          }
        }
        if (inf_new && !is_omega && ik < t && t < rk) {
          ch.own_phi += beta;
          ++ch.own_count;
        }
      }
      d_pressure += beta * d;
    }
    ch.d_pressure = d_pressure;

    double d_haz = 0.0;
    for (const auto& u : ch.updates) {
      if (u.count == 0) {
        ch.zero_density = true;
        break;
      }
      if (count_[u.farm] == 0) continue;  // current state already has zero density
      d_haz += std::log1p((u.phi - phi_[u.farm]) / phi_[u.farm]);
    }
    if (!is_omega) {
      if (inf_old && count_[j] > 0) d_haz -= std::log(phi_[j]);
      if (inf_new) {
        if (ch.own_count == 0) ch.zero_density = true;
        else d_haz += std::log(ch.own_phi);
      }
    }
    ch.d_log_hazards = d_haz;

    double d_rem = 0.0;
    if (inf_old) d_rem -= removal_term(j, a, params_);
    if (inf_new) {
      double term = removal_term(j, t, params_);
      if (term == kNegInf) ch.zero_density = true;
      d_rem += term;
    }
    ch.d_log_removal = d_rem;
    ch.delta = ch.zero_density ? kNegInf : -d_pressure + d_haz + d_rem;
    return ch;
  }

  void commit(const Change& ch) {
    const std::size_t j = ch.farm;
    if (state_.infection[j] == ch.new_time) return;
    state_.infection[j] = ch.new_time;
    for (const auto& u : ch.updates) {
      phi_[u.farm] = u.phi;
      count_[u.farm] = u.count;
    }
    if (j != state_.omega) {
      phi_[j] = happened(ch.new_time) ? ch.own_phi : 0.0;
      count_[j] = happened(ch.new_time) ? ch.own_count : 0;
    }
    terms_.pressure += ch.d_pressure;
    if (ch.zero_density || !std::isfinite(terms_.log_hazards) || !std::isfinite(terms_.log_removal)) {
      // Leaving or entering a zero-density state: recompute from the caches.
      terms_.log_hazards = 0.0;
      for (std::size_t k = 0; k < state_.size(); ++k) {
        if (!state_.infected(k) || k == state_.omega) continue;
        terms_.log_hazards += count_[k] > 0 ? std::log(phi_[k]) : kNegInf;
      }
      terms_.log_removal = removal_log_density(params_);
    } else {
      terms_.log_hazards += ch.d_log_hazards;
      terms_.log_removal += ch.d_log_removal;
    }
  }

 private:
  double removal_term(std::size_t j, double inf, const InfectiousPeriodParams& p) const {
    const double period = state_.removal(j) - inf;
    if (period <= 0.0) return kNegInf;
    return happened(state_.natural_cull[j]) ? gamma_log_pdf(period, p) : gamma_log_survivor(period, p);
  }

  AugmentedState state_;
  std::shared_ptr<const RateTable> rates_;
  InfectiousPeriodParams params_;
  std::vector<double> phi_;
  std::vector<int> count_;
  LikelihoodTerms terms_;
};

}  // namespace gpepi

#endif  // GPEPI_LIKELIHOOD_HPP
