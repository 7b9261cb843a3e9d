#ifndef GPEPI_MCMC_HPP
#define GPEPI_MCMC_HPP

// Data-augmentation Metropolis-Hastings sampler. One sweep updates the GP
// field, the length scale (unless fixed), gamma, the initial-case label
// and time, then performs a number of move/add/delete steps on the
// infection times.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gpepi/core.hpp"
#include "gpepi/data.hpp"
#include "gpepi/gp.hpp"
#include "gpepi/likelihood.hpp"
#include "gpepi/rates.hpp"
#include "gpepi/trace.hpp"

namespace gpepi {

struct TuningConfig {
  double delta = 0.05;
  double sigma_l = 0.5;
  double sigma_gamma = 0.05;
  double sigma_i_omega = 1.0;
  std::size_t moves_per_iteration = 20;
  std::size_t iterations = 1000;
  std::size_t burn_in = 0;
  std::size_t thinning = 1;
  bool adapt = false;            // Robbins-Monro during burn-in only
  std::size_t audit_interval = 1000;  // 0 disables

  void validate() const {
    if (!(delta > 0.0 && delta <= 1.0)) throw InputError("tuning.delta must lie in (0, 1]");
    if (!(sigma_l > 0.0)) throw InputError("tuning.sigma_l must be > 0");
    if (!(sigma_gamma > 0.0)) throw InputError("tuning.sigma_gamma must be > 0");
    if (!(sigma_i_omega > 0.0)) throw InputError("tuning.sigma_i_omega must be > 0");
    if (thinning == 0) throw InputError("tuning.thinning must be >= 1");
    if (iterations > 0 && burn_in >= iterations) throw InputError("tuning.burn_in must be < iterations");
  }

  bool retained(std::size_t t) const { return t >= burn_in && (t - burn_in + 1) % thinning == 0; }
  std::size_t retained_count() const { return iterations > burn_in ? (iterations - burn_in) / thinning : 0; }
};

struct PriorConfig {
  double l_rate = 0.01;
  double gamma_rate = 0.01;
  double i_omega_rate = 0.01;  // prior on -i_omega
  double alpha = 9.0;
  double lambda = 4.0;

  void validate() const {
    if (!(l_rate > 0.0) || !(gamma_rate > 0.0) || !(i_omega_rate > 0.0))
      throw InputError("prior rates must be > 0");
    if (!(alpha > 0.0)) throw InputError("alpha must be > 0");
    if (!(lambda > 0.0)) throw InputError("lambda must be > 0");
  }
};

struct SamplerConfig {
  TuningConfig tuning;
  PriorConfig prior;
  GridSpec grid;
  double initial_l = 3.0;
  bool fixed_l = false;
  std::optional<double> init_gamma;  // drawn from the prior when unset
  std::optional<double> truncation;  // km; pairs further apart get rate 0
  JitterPolicy jitter;
  bool likelihood_enabled = true;    // false samples the prior
  std::size_t init_retries = 100;
};

/// Latent and parameter state of a chain.
struct ChainState {
  Eigen::VectorXd g_bar;
  double length_scale = 1.0;
  double gamma = 1.0;
  AugmentedState augmented;
};

enum class Update : std::size_t { g, l, gamma, omega, i_omega, move, add, remove, count_ };

inline constexpr std::array<const char*, 8> kUpdateNames{"g", "l", "gamma", "omega", "i_omega",
                                                         "move", "add", "delete"};

struct AcceptanceStats {
  std::array<std::size_t, 8> proposed{};
  std::array<std::size_t, 8> accepted{};

  void record(Update u, bool ok) {
    ++proposed[static_cast<std::size_t>(u)];
    if (ok) ++accepted[static_cast<std::size_t>(u)];
  }
  double rate(Update u) const {
    auto i = static_cast<std::size_t>(u);
    return proposed[i] ? static_cast<double>(accepted[i]) / static_cast<double>(proposed[i]) : 0.0;
  }
};

class Sampler {
 public:
  Sampler(const Dataset& data, SamplerConfig cfg, Rng rng, WarningSink warn = {})
      : data_(&data), dist_(data), cfg_(std::move(cfg)), rng_(std::move(rng)), warn_(std::move(warn)) {
    cfg_.tuning.validate();
    cfg_.prior.validate();
    data.validate();
    if (!(cfg_.initial_l > 0.0)) throw InputError("initial length scale must be > 0");
    if (cfg_.init_gamma && !(*cfg_.init_gamma > 0.0)) throw InputError("init_gamma must be > 0");
    const std::size_t n = data.size();
    std::vector<bool> involved(n, false);
    for (std::size_t j = 0; j < n; ++j) {
      involved[j] = data.farms[j].culled();
      if (data.farms[j].culled() && data.farms[j].preemptive) preemptive_.push_back(j);
    }
    pairs_ = PairDistances(dist_, involved, cfg_.truncation);
    const auto& ud = pairs_.unique_distances();
    // An automatic grid spans the whole study region so the fitted curve can
    // drive predictive simulations over every pair.
    const double needed = ud.empty() ? 0.0 : ud.back();
    if (cfg_.grid.knots.empty() && !cfg_.grid.max_distance) {
      GridSpec auto_grid = cfg_.grid;
      auto_grid.max_distance = std::max(needed, dist_.max_distance());
      knots_ = build_pseudo_grid(auto_grid, needed);
    } else {
      knots_ = build_pseudo_grid(cfg_.grid, needed);
    }
    l_ = cfg_.initial_l;
    cov_ = CovarianceMatrix::build(knots_, {cfg_.prior.alpha, l_}, cfg_.jitter);
    proj_ = Projector::build(ud, cov_);
    initialize();
  }

  /// Starts from an explicit state instead of the random initialisation.
  Sampler(const Dataset& data, SamplerConfig cfg, Rng rng, const ChainState& start, WarningSink warn = {})
      : Sampler(data, std::move(cfg), std::move(rng), std::move(warn)) {
    set_state(start);
  }

  // ------------------------------------------------------------------ access
  const Dataset& data() const { return *data_; }
  const SamplerConfig& config() const { return cfg_; }
  const TuningConfig& tuning() const { return cfg_.tuning; }
  const std::vector<double>& knots() const { return knots_; }
  const Eigen::VectorXd& g_bar() const { return g_bar_; }
  double length_scale() const { return l_; }
  double gamma() const { return eval_.params().rate; }
  const AugmentedState& state() const { return eval_.state(); }
  const RateTable& rates() const { return *rates_; }
  const CovarianceMatrix& covariance() const { return cov_; }
  const Projector& projector() const { return proj_; }
  double log_likelihood() const { return eval_.total(); }
  std::size_t iteration() const { return iteration_; }
  const AcceptanceStats& stats() const { return stats_; }
  std::size_t m() const { return preemptive_.size(); }
  std::size_t m_tilde() const { return m_tilde_; }
  Rng& rng() { return rng_; }

  std::size_t count_flagged() const {
    std::size_t c = 0;
    for (auto j : preemptive_) c += state().infected(j) ? 1 : 0;
    return c;
  }

  ChainState chain_state() const { return {g_bar_, l_, gamma(), state()}; }

  void set_state(const ChainState& s) {
    if (s.g_bar.size() != static_cast<Eigen::Index>(knots_.size()))
      throw InputError("state g_bar length does not match the pseudo grid");
    s.augmented.validate();
    if (s.augmented.size() != data_->size()) throw StateError("state size does not match the dataset");
    if (s.length_scale != l_) {
      l_ = s.length_scale;
      cov_ = CovarianceMatrix::build(knots_, {cfg_.prior.alpha, l_}, cfg_.jitter);
      proj_ = Projector::build(pairs_.unique_distances(), cov_);
    }
    g_bar_ = s.g_bar;
    rates_ = rates_for(proj_, g_bar_);
    eval_ = LikelihoodEvaluator(s.augmented, rates_, params_with(s.gamma));
    m_tilde_ = count_flagged();
  }

  // ------------------------------------------------------------------ sweep
  void sweep() {
    const bool adapting = cfg_.tuning.adapt && iteration_ < cfg_.tuning.burn_in;
    const double step = adapting ? std::pow(static_cast<double>(iteration_) + 1.0, -0.6) : 0.0;
    auto tune = [&](double& value, bool ok, double target, double cap) {
      if (!adapting) return;
      value *= std::exp(step * ((ok ? 1.0 : 0.0) - target));
      value = std::min(value, cap);
    };
    bool ok = update_g();
    tune(cfg_.tuning.delta, ok, 0.23, 1.0);
    if (!cfg_.fixed_l) {
      ok = update_l();
      tune(cfg_.tuning.sigma_l, ok, 0.44, kNever);
    }
    ok = update_gamma();
    tune(cfg_.tuning.sigma_gamma, ok, 0.44, kNever);
    update_omega();
    update_i_omega();
    for (std::size_t k = 0; k < cfg_.tuning.moves_per_iteration; ++k) {
      switch (uniform_index(3, rng_)) {
        case 0: move_infection(); break;
        case 1: add_infection(); break;
        default: delete_infection(); break;
      }
    }
    ++iteration_;
  }

  // ------------------------------------------------------------ GP updates
  bool update_g() {
    Eigen::VectorXd proposal = underrelaxed_propose(g_bar_, cfg_.tuning.delta, cov_, rng_);
    std::shared_ptr<RateTable> r_new;
    double log_ratio = 0.0;
    if (cfg_.likelihood_enabled) {
      r_new = rates_for(proj_, proposal);
      log_ratio = full_log_likelihood(state(), *r_new, eval_.params()) - eval_.total();
    }
    bool ok = mh_accept(log_ratio, rng_);
    stats_.record(Update::g, ok);
    if (!ok) return false;
    g_bar_ = std::move(proposal);
    if (r_new) {
      rates_ = std::move(r_new);
      eval_.set_rates(rates_);
    }
    return true;
  }

  bool update_l() {
    const double proposal = l_ + cfg_.tuning.sigma_l * std_normal(rng_);
    if (!(proposal > 0.0)) {
      stats_.record(Update::l, false);
      return false;
    }
    std::optional<CovarianceMatrix> cov_new;
    try {
      cov_new = CovarianceMatrix::build(knots_, {cfg_.prior.alpha, proposal}, cfg_.jitter);
    } catch (const NumericalError& e) {
      warn(std::string("length-scale proposal rejected: ") + e.what());
      stats_.record(Update::l, false);
      return false;
    }
    double log_ratio = log_density(g_bar_, *cov_new) - log_density(g_bar_, cov_) -
                       cfg_.prior.l_rate * (proposal - l_);
    std::optional<Projector> proj_new;
    std::shared_ptr<RateTable> r_new;
    if (cfg_.likelihood_enabled) {
      proj_new = Projector::build(pairs_.unique_distances(), *cov_new);
      r_new = rates_for(*proj_new, g_bar_);
      log_ratio += full_log_likelihood(state(), *r_new, eval_.params()) - eval_.total();
    }
    bool ok = mh_accept(log_ratio, rng_);
    stats_.record(Update::l, ok);
    if (!ok) return false;
    l_ = proposal;
    cov_ = std::move(*cov_new);
    if (proj_new) {
      proj_ = std::move(*proj_new);
      rates_ = std::move(r_new);
      eval_.set_rates(rates_);
    } else {
      projector_stale_ = true;
    }
    return true;
  }

  // -------------------------------------------------------- removal params
  double log_ratio_gamma(double proposal) const {
    if (!(proposal > 0.0)) return kNegInf;
    double r = -cfg_.prior.gamma_rate * (proposal - gamma());
    if (cfg_.likelihood_enabled)
      r += eval_.removal_log_density(params_with(proposal)) - eval_.removal_log_density(eval_.params());
    return r;
  }

  bool update_gamma() {
    const double proposal = gamma() + cfg_.tuning.sigma_gamma * std_normal(rng_);
    bool ok = mh_accept(log_ratio_gamma(proposal), rng_);
    stats_.record(Update::gamma, ok);
    if (ok) eval_.set_params(params_with(proposal));
    return ok;
  }

  // ---------------------------------------------------------- initial case
  /// Farm with the smallest infection time other than the initial case.
  std::optional<std::size_t> runner_up() const {
    const auto& s = state();
    std::optional<std::size_t> best;
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (k == s.omega || !s.infected(k)) continue;
      if (!best || s.infection[k] < s.infection[*best]) best = k;
    }
    return best;
  }

  /// Swapped state, or nullopt when the swap is unavailable or invalid.
  std::optional<AugmentedState> omega_swap_proposal() const {
    auto s2 = runner_up();
    if (!s2) return std::nullopt;
    const auto& s = state();
    if (!(s.infection[*s2] < s.removal(s.omega))) return std::nullopt;
    AugmentedState next = s;
    std::swap(next.infection[s.omega], next.infection[*s2]);
    next.omega = *s2;
    return next;
  }

  double log_ratio_omega_swap(const AugmentedState& proposal) const {
    if (!cfg_.likelihood_enabled) return 0.0;
    return full_log_likelihood(proposal, *rates_, eval_.params()) - eval_.total();
  }

  bool update_omega() {
    if (!runner_up()) return false;  // only the initial case is infected
    auto proposal = omega_swap_proposal();
    bool ok = proposal && mh_accept(log_ratio_omega_swap(*proposal), rng_);
    stats_.record(Update::omega, ok);
    if (ok) {
      eval_.replace_state(std::move(*proposal));
      m_tilde_ = count_flagged();
    }
    return ok;
  }

  bool i_omega_valid(double t) const {
    const auto& s = state();
    if (!(t <= 0.0) || !(t < s.removal(s.omega))) return false;
    auto s2 = runner_up();
    return !s2 || t < s.infection[*s2];
  }

  double log_ratio_i_omega(double t) const {
    if (!i_omega_valid(t)) return kNegInf;
    const double prior = cfg_.prior.i_omega_rate * (t - state().i_omega());
    return prior + lik(eval_.propose(state().omega, t).delta);
  }

  bool update_i_omega() {
    const double t = state().i_omega() + cfg_.tuning.sigma_i_omega * std_normal(rng_);
    if (!i_omega_valid(t)) {
      stats_.record(Update::i_omega, false);
      return false;
    }
    auto ch = eval_.propose(state().omega, t);
    bool ok = mh_accept(cfg_.prior.i_omega_rate * (t - state().i_omega()) + lik(ch.delta), rng_);
    stats_.record(Update::i_omega, ok);
    if (ok) eval_.commit(ch);
    return ok;
  }

  // ------------------------------------------------------- infection times
  /// Infected farms other than the initial case.
  std::vector<std::size_t> move_candidates() const {
    std::vector<std::size_t> out;
    const auto& s = state();
    for (std::size_t k = 0; k < s.size(); ++k)
      if (s.infected(k) && k != s.omega) out.push_back(k);
    return out;
  }

  /// Pre-emptively culled farms without an infection time.
  std::vector<std::size_t> add_candidates() const {
    std::vector<std::size_t> out;
    for (auto j : preemptive_)
      if (!state().infected(j)) out.push_back(j);
    return out;
  }

  /// Pre-emptively culled farms with an infection time, the initial case
  /// excluded.
  std::vector<std::size_t> delete_candidates() const {
    std::vector<std::size_t> out;
    for (auto j : preemptive_)
      if (state().infected(j) && j != state().omega) out.push_back(j);
    return out;
  }

  double log_ratio_move(std::size_t j, double t) const {
    const auto& s = state();
    if (!(t > s.i_omega()) || !(t < s.removal(j))) return kNegInf;
    const double r = s.removal(j);
    return gamma_log_pdf(r - s.infection[j], eval_.params()) - gamma_log_pdf(r - t, eval_.params()) +
           lik(eval_.propose(j, t).delta);
  }

  double log_ratio_add(std::size_t j, double t) const {
    const auto& s = state();
    if (!(t > s.i_omega()) || !(t < s.removal(j))) return kNegInf;
    const double free_count = static_cast<double>(add_candidates().size());
    const double back_count = static_cast<double>(delete_candidates().size() + 1);
    return std::log(free_count) - std::log(back_count) - gamma_log_pdf(s.removal(j) - t, eval_.params()) +
           lik(eval_.propose(j, t).delta);
  }

  double log_ratio_delete(std::size_t j) const {
    const auto& s = state();
    const double held = static_cast<double>(delete_candidates().size());
    const double back_count = static_cast<double>(add_candidates().size() + 1);
    return gamma_log_pdf(s.removal(j) - s.infection[j], eval_.params()) + std::log(held) - std::log(back_count) +
           lik(eval_.propose(j, kNever).delta);
  }

  bool move_infection() {
    auto cand = move_candidates();
    if (cand.empty()) return false;
    const std::size_t j = cand[uniform_index(cand.size(), rng_)];
    const double t = state().removal(j) - gamma_draw(cfg_.prior.lambda, gamma(), rng_);
    return try_change(Update::move, j, t, [&] { return log_ratio_move(j, t); });
  }

  bool add_infection() {
    auto cand = add_candidates();
    if (cand.empty()) return false;
    const std::size_t j = cand[uniform_index(cand.size(), rng_)];
    const double t = state().removal(j) - gamma_draw(cfg_.prior.lambda, gamma(), rng_);
    return try_change(Update::add, j, t, [&] { return log_ratio_add(j, t); });
  }

  bool delete_infection() {
    auto cand = delete_candidates();
    if (cand.empty()) return false;
    const std::size_t j = cand[uniform_index(cand.size(), rng_)];
    return try_change(Update::remove, j, kNever, [&] { return log_ratio_delete(j); });
  }

  // ------------------------------------------------------------- auditing
  /// Fresh full evaluation of the current state.
  double fresh_log_likelihood() const { return gpepi::log_likelihood(state(), *rates_, eval_.params()); }

  /// Compares the cached likelihood with a fresh evaluation, throws when
  /// they disagree by more than 1e-6 and resynchronises otherwise.
  double audit() {
    if (m_tilde_ != count_flagged()) throw StateError("m-tilde counter drifted from the infection flags");
    const double cached = eval_.total(), fresh = fresh_log_likelihood();
    double gap = 0.0;
    if (std::isfinite(cached) || std::isfinite(fresh)) {
      gap = std::fabs(cached - fresh);
      if (!(gap <= 1e-6 * std::max(1.0, std::fabs(fresh))))
        throw NumericalError("likelihood cache drifted: cached " + std::to_string(cached) + " vs fresh " +
                             std::to_string(fresh));
    }
    resync();
    return gap;
  }

  void resync() {
    if (projector_stale_ && cfg_.likelihood_enabled) {
      proj_ = Projector::build(pairs_.unique_distances(), cov_);
      projector_stale_ = false;
    }
    eval_.rebuild();
  }

  // ------------------------------------------------------------ recording
  TraceRecord record() const {
    TraceRecord r;
    r.iteration = iteration_ == 0 ? 0 : iteration_ - 1;
    r.g_bar.assign(g_bar_.data(), g_bar_.data() + g_bar_.size());
    r.length_scale = l_;
    r.gamma = gamma();
    const auto& s = state();
    r.omega = data_->farms[s.omega].id;
    r.i_omega = s.i_omega();
    for (std::size_t k = 0; k < s.size(); ++k)
      if (s.infected(k)) r.infection.emplace_back(data_->farms[k].id, s.infection[k]);
    for (auto j : preemptive_)
      if (s.infected(j)) r.c_ids.push_back(data_->farms[j].id);
    r.loglik = cfg_.likelihood_enabled ? eval_.total() : std::numeric_limits<double>::quiet_NaN();
    return r;
  }

  TraceHeader header(std::size_t chain = 0, std::uint64_t seed = 0, nlohmann::json config = nlohmann::json::object()) const {
    TraceHeader h;
    h.knots = knots_;
    h.alpha = cfg_.prior.alpha;
    h.lambda = cfg_.prior.lambda;
    h.farm_count = data_->size();
    for (auto j : preemptive_) h.preemptive_ids.push_back(data_->farms[j].id);
    h.chain = chain;
    h.seed = seed;
    h.config = std::move(config);
    return h;
  }

  // ----------------------------------------------------------- checkpoint
  nlohmann::json save() const {
    nlohmann::json j;
    j["format"] = "gpepi-checkpoint";
    j["iteration"] = iteration_;
    j["g_bar"] = std::vector<double>(g_bar_.data(), g_bar_.data() + g_bar_.size());
    j["l"] = l_;
    j["gamma"] = gamma();
    const auto& s = state();
    j["omega"] = data_->farms[s.omega].id;
    nlohmann::json inf = nlohmann::json::array();
    for (std::size_t k = 0; k < s.size(); ++k)
      if (s.infected(k)) inf.push_back({data_->farms[k].id, s.infection[k]});
    j["infection"] = inf;
    j["tuning"] = {{"delta", cfg_.tuning.delta},
                   {"sigma_l", cfg_.tuning.sigma_l},
                   {"sigma_gamma", cfg_.tuning.sigma_gamma},
                   {"sigma_i_omega", cfg_.tuning.sigma_i_omega}};
    j["proposed"] = stats_.proposed;
    j["accepted"] = stats_.accepted;
    std::ostringstream rng;
    rng << rng_;
    j["rng"] = rng.str();
    return j;
  }

  void load(const nlohmann::json& j) {
    if (j.value("format", "") != "gpepi-checkpoint") throw InputError("not a checkpoint file");
    auto idx = data_->index_map();
    auto lookup = [&](FarmId id) {
      auto it = idx.find(id);
      if (it == idx.end()) throw InputError("checkpoint refers to unknown farm id " + std::to_string(id));
      return it->second;
    };
    ChainState cs;
    auto g = j.at("g_bar").get<std::vector<double>>();
    cs.g_bar = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
    cs.length_scale = j.at("l").get<double>();
    cs.gamma = j.at("gamma").get<double>();
    cs.augmented = AugmentedState::from_dataset(*data_);
    cs.augmented.omega = lookup(j.at("omega").get<FarmId>());
    for (const auto& e : j.at("infection")) cs.augmented.infection[lookup(e.at(0).get<FarmId>())] = e.at(1).get<double>();
    const auto& t = j.at("tuning");
    cfg_.tuning.delta = t.at("delta").get<double>();
    cfg_.tuning.sigma_l = t.at("sigma_l").get<double>();
    cfg_.tuning.sigma_gamma = t.at("sigma_gamma").get<double>();
    cfg_.tuning.sigma_i_omega = t.at("sigma_i_omega").get<double>();
    set_state(cs);
    iteration_ = j.at("iteration").get<std::size_t>();
    stats_.proposed = j.at("proposed").get<std::array<std::size_t, 8>>();
    stats_.accepted = j.at("accepted").get<std::array<std::size_t, 8>>();
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> rng_;
    if (!rng) throw InputError("checkpoint has a corrupt random-number state");
  }

 private:
  static double full_log_likelihood(const AugmentedState& s, const RateTable& r, const InfectiousPeriodParams& p) {
    return likelihood_terms(s, r, p).total();
  }

  double lik(double delta) const { return cfg_.likelihood_enabled ? delta : 0.0; }

  InfectiousPeriodParams params_with(double gamma_rate) const { return {cfg_.prior.lambda, gamma_rate}; }

  std::shared_ptr<RateTable> rates_for(const Projector& proj, const Eigen::VectorXd& g) const {
    auto t = std::make_shared<RateTable>(data_->size());
    pairs_.fill(proj.project(g), *t);
    return t;
  }

  void warn(const std::string& msg) const {
    if (warn_) warn_(msg);
  }

  template <typename RatioFn>
  bool try_change(Update kind, std::size_t j, double t, RatioFn&& ratio) {
    const double log_ratio = ratio();
    bool ok = mh_accept(log_ratio, rng_);
    stats_.record(kind, ok);
    if (!ok) return false;
    eval_.commit(eval_.propose(j, t));
    if (kind == Update::add) ++m_tilde_;
    if (kind == Update::remove) --m_tilde_;
    return true;
  }

  /// Random start: g from the prior, gamma from init_gamma or its prior,
  /// initial case = earliest natural cull, other natural culls get
  /// r - Gamma(lambda, gamma) infection times that have a possible source.
  void initialize() {
    const Dataset& data = *data_;
    const std::size_t n = data.size();
    g_bar_ = sample_prior(cov_, rng_);
    rates_ = rates_for(proj_, g_bar_);
    const double gamma0 = cfg_.init_gamma ? *cfg_.init_gamma : exponential_draw(cfg_.prior.gamma_rate, rng_);
    const double lambda = cfg_.prior.lambda;

    AugmentedState s = AugmentedState::from_dataset(data);
    std::vector<std::size_t> naturals;
    for (std::size_t j = 0; j < n; ++j)
      if (happened(s.natural_cull[j])) naturals.push_back(j);
    if (naturals.empty()) throw InputError("dataset has no naturally culled farm");
    std::stable_sort(naturals.begin(), naturals.end(),
                     [&](std::size_t a, std::size_t b) { return s.natural_cull[a] < s.natural_cull[b]; });
    s.omega = naturals.front();

    auto open_uniform = [&](double lo, double hi) {
      double u = 0.0;
      while (u <= 0.0) u = uniform01(rng_);
      return lo + (hi - lo) * u;
    };
    for (std::size_t attempt = 0; attempt < cfg_.init_retries; ++attempt) {
      std::fill(s.infection.begin(), s.infection.end(), kNever);
      s.infection[s.omega] = s.removal(s.omega) - gamma_draw(lambda, gamma0, rng_);
      if (!(s.infection[s.omega] < s.removal(s.omega))) continue;
      std::vector<std::size_t> placed{s.omega};
      bool failed = false;
      for (std::size_t idx = 1; idx < naturals.size() && !failed; ++idx) {
        const std::size_t j = naturals[idx];
        auto has_source = [&](double t) {
          for (auto k : placed)
            if (s.infection[k] < t && t < s.removal(k) && (*rates_)(k, j) > 0.0) return true;
          return false;
        };
        double chosen = kNever;
        for (std::size_t tr = 0; tr < cfg_.init_retries; ++tr) {
          double t = s.removal(j) - gamma_draw(lambda, gamma0, rng_);
          if (t > s.i_omega() && t < s.removal(j) && has_source(t)) {
            chosen = t;
            break;
          }
        }
        if (!happened(chosen)) {
          // Fall back to a uniform time inside a placed farm's infectious window.
          for (auto k : placed) {
            const double lo = std::max(s.infection[k], s.i_omega());
            const double hi = std::min(s.removal(k), s.removal(j));
            if ((*rates_)(k, j) > 0.0 && hi > lo) {
              chosen = open_uniform(lo, hi);
              break;
            }
          }
        }
        if (!happened(chosen)) failed = true;
        else {
          s.infection[j] = chosen;
          placed.push_back(j);
        }
      }
      if (failed) continue;
      eval_ = LikelihoodEvaluator(s, rates_, params_with(gamma0));
      if (std::isfinite(eval_.total())) {
        m_tilde_ = 0;
        return;
      }
    }
    throw InputError("could not find an initial state with positive likelihood after " +
                     std::to_string(cfg_.init_retries) +
                     " attempts; set init_gamma so initial infectious periods are longer, or remove the "
                     "distance truncation");
  }

  const Dataset* data_;
  DistanceIndex dist_;
  SamplerConfig cfg_;
  Rng rng_;
  WarningSink warn_;
  std::vector<std::size_t> preemptive_;
  PairDistances pairs_;
  std::vector<double> knots_;
  double l_ = 1.0;
  CovarianceMatrix cov_;
  Projector proj_;
  bool projector_stale_ = false;
  Eigen::VectorXd g_bar_;
  std::shared_ptr<RateTable> rates_;
  LikelihoodEvaluator eval_;
  std::size_t m_tilde_ = 0;
  std::size_t iteration_ = 0;
  AcceptanceStats stats_;
};

// --------------------------------------------------------------------------
// Chain driver

struct ChainFiles {
  std::filesystem::path trace;
  std::filesystem::path checkpoint;
  std::size_t checkpoint_interval = 1000;  // sweeps; 0 writes only at the end
  bool resume = false;
};

/// Runs the remaining sweeps, calling `on_record` for every retained one.
inline void run_sweeps(Sampler& sampler, const std::function<void(const TraceRecord&)>& on_record,
                       const std::function<void(std::size_t)>& after_sweep = {}) {
  const auto& tuning = sampler.tuning();
  while (sampler.iteration() < tuning.iterations) {
    const std::size_t t = sampler.iteration();
    sampler.sweep();
    if (tuning.retained(t)) on_record(sampler.record());
    if (tuning.audit_interval && (t + 1) % tuning.audit_interval == 0) sampler.audit();
    if (after_sweep) after_sweep(t + 1);
  }
}

/// In-memory chain.
inline ChainTrace run_chain(Sampler& sampler, TraceHeader header = {}) {
  ChainTrace out;
  out.header = std::move(header);
  if (out.header.knots.empty()) out.header = sampler.header();
  run_sweeps(sampler, [&](const TraceRecord& r) { out.records.push_back(r); });
  return out;
}

/// Chain persisted to a JSON Lines trace with periodic atomic checkpoints.
/// With `resume`, the sampler is restored from the checkpoint and the trace
/// is cut back to the length recorded there.
inline void run_chain(Sampler& sampler, const TraceHeader& header, const ChainFiles& files) {
  namespace fs = std::filesystem;
  std::ofstream out;
  if (files.resume && fs::exists(files.checkpoint)) {
    std::ifstream in(files.checkpoint);
    nlohmann::json cp;
    try {
      cp = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw InputError("cannot parse checkpoint '" + files.checkpoint.string() + "': " + e.what());
    }
    sampler.load(cp.at("sampler"));
    const auto bytes = cp.at("trace_bytes").get<std::uintmax_t>();
    if (!fs::exists(files.trace) || fs::file_size(files.trace) < bytes)
      throw InputError("trace '" + files.trace.string() + "' is shorter than its checkpoint records");
    fs::resize_file(files.trace, bytes);
    out.open(files.trace, std::ios::binary | std::ios::app);
  } else {
    out.open(files.trace, std::ios::binary | std::ios::trunc);
    if (out) out << to_json(header).dump() << '\n';
  }
  if (!out) throw Error("cannot open trace '" + files.trace.string() + "' for writing");

  auto checkpoint = [&] {
    out.flush();
    if (!out) throw Error("write to trace '" + files.trace.string() + "' failed; resume from the last checkpoint");
    sampler.resync();
    nlohmann::json cp;
    cp["sampler"] = sampler.save();
    cp["trace_bytes"] = fs::file_size(files.trace);
    write_file_atomic(files.checkpoint, cp.dump());
  };
  run_sweeps(
      sampler, [&](const TraceRecord& r) { out << to_json(r).dump() << '\n'; },
      [&](std::size_t done) {
        if (files.checkpoint_interval && done % files.checkpoint_interval == 0) checkpoint();
      });
  checkpoint();
}

}  // namespace gpepi

#endif  // GPEPI_MCMC_HPP
