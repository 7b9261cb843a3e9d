#ifndef GPEPI_CONFIG_HPP
#define GPEPI_CONFIG_HPP

// JSON run configuration for the command-line tool. Every section is
// checked against its key list; unknown keys and type errors are collected
// and reported together.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "gpepi/core.hpp"
#include "gpepi/data.hpp"
#include "gpepi/mcmc.hpp"
#include "gpepi/posterior.hpp"
#include "gpepi/simulator.hpp"

namespace gpepi {

/// Itemised configuration failure.
class ConfigError : public InputError {
 public:
  explicit ConfigError(std::vector<std::string> items)
      : InputError(join(items)), items_(std::move(items)) {}
  const std::vector<std::string>& items() const { return items_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out = "invalid configuration:";
    for (const auto& i : items) out += "\n  - " + i;
    return out;
  }
  std::vector<std::string> items_;
};

namespace detail {

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Reads typed values out of one JSON object, recording problems instead
/// of throwing.
class Section {
 public:
  Section(const nlohmann::json& obj, std::string path, std::vector<std::string>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {
    if (!obj_.is_object()) error("must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.is_object() && obj_.contains(key) && !obj_.at(key).is_null();
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      error(key + ": expected " + type_name<T>() + ", got " + obj_.at(key).dump());
    }
  }

  template <typename T>
  void get(const std::string& key, std::optional<T>& out) {
    if (!has(key)) return;
    T v{};
    get(key, v);
    out = v;
  }

  template <typename T>
  void require(const std::string& key, T& out) {
    if (!has(key)) {
      error(key + ": required");
      return;
    }
    get(key, out);
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    static const nlohmann::json empty = nlohmann::json::object();
    if (!obj_.is_object() || !obj_.contains(key) || obj_.at(key).is_null())
      return Section(empty, path_ + key + ".", errors_);
    return Section(obj_.at(key), path_ + key + ".", errors_);
  }

  const nlohmann::json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  void error(const std::string& what) { errors_.push_back(path_ + what); }

  /// Reports keys nobody asked for, with a spelling suggestion.
  void finish() {
    if (!obj_.is_object()) return;
    for (const auto& [key, value] : obj_.items()) {
      if (seen_.count(key)) continue;
      std::string msg = "unknown key '" + path_ + key + "'";
      std::string best;
      std::size_t best_d = 3;
      for (const auto& s : seen_) {
        std::size_t d = edit_distance(key, s);
        if (d < best_d) best_d = d, best = s;
      }
      if (!best.empty()) msg += " (did you mean '" + best + "'?)";
      errors_.push_back(msg);
    }
  }

 private:
  template <typename T>
  static std::string type_name() {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else if constexpr (std::is_integral_v<T>) return "an integer";
    else if constexpr (std::is_floating_point_v<T>) return "a number";
    else if constexpr (std::is_same_v<T, std::string>) return "a string";
    else return "a list";
  }

  const nlohmann::json& obj_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

}  // namespace detail

// --------------------------------------------------------------------------
// Section types

struct DataConfig {
  std::string farm_file;
  FarmFileOptions options;
};

struct KernelConfig {
  int id = 6;
  double b0 = 0.6, b1 = 2.0, b2 = 1.0;
  ParametricRate rate() const { return {parametric_kernel_from_id(id), b0, b1, b2}; }
};

struct SimulateConfig {
  std::optional<DataConfig> layout_file;
  std::size_t synthetic_count = 0;
  double synthetic_side_km = 0.0;
  KernelConfig kernel;
  double lambda = 4.0;
  double gamma = 0.8;
  std::optional<FarmId> omega;  // unset: chosen uniformly per replicate
  CullingPolicy policy;
  std::size_t replicates = 1;
  std::size_t min_infections = 0;
  std::size_t max_attempts = 0;  // 0: 100 x replicates
};

struct FitConfig {
  std::size_t chains = 1;
  SamplerConfig sampler;
  std::size_t checkpoint_interval = 1000;
};

struct SummarizeConfig {
  std::vector<std::string> traces;
  std::vector<double> curve_knots;
  std::optional<std::string> truth_file;
};

struct PredictConfig {
  std::vector<std::string> traces;
  std::vector<double> radii{0.0, 1.0, 2.0};
  PolicyMode mode = PolicyMode::capped_ring;
  std::vector<CapRow> rows = default_cap_rows();
  std::size_t replicates_per_draw = 1;
  std::size_t max_draws = 0;
  CompensationTable compensation;
};

struct ValidateConfig {
  std::size_t likelihood_instances = 1000;
  std::size_t delta_moves = 1000;
  std::size_t identity_tuples = 100;
  std::size_t prior_sweeps = 4000000;
  double perturb_likelihood = 0.0;  // negative-control hook
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  unsigned workers = 0;  // 0: available parallelism
  std::string output_dir = "out";
  std::optional<DataConfig> data;
  SimulateConfig simulate;
  FitConfig fit;
  SummarizeConfig summarize;
  PredictConfig predict;
  ValidateConfig validate;
  nlohmann::json source = nlohmann::json::object();
  bool has_simulate = false, has_fit = false, has_summarize = false, has_predict = false;
};

namespace detail {

inline DataConfig parse_data_section(Section s) {
  DataConfig d;
  s.require("farm_file", d.farm_file);
  std::string delim = ",";
  s.get("delimiter", delim);
  if (delim == "\\t" || delim == "tab") delim = "\t";
  if (delim.size() != 1) s.error("delimiter: must be a single character");
  else d.options.delimiter = delim[0];
  std::string mode = "iso";
  s.get("date_mode", mode);
  if (mode == "iso") d.options.date_mode = DateMode::iso;
  else if (mode == "days") d.options.date_mode = DateMode::days;
  else s.error("date_mode: expected \"iso\" or \"days\"");
  {
    auto c = s.child("columns");
    auto& cols = d.options.columns;
    c.get("id", cols.id);
    c.get("x", cols.x);
    c.get("y", cols.y);
    c.get("cull_date", cols.cull_date);
    c.get("preemptive", cols.preemptive);
    c.get("flock_type", cols.flock_type);
    c.get("flock_size", cols.flock_size);
    c.finish();
  }
  s.get("min_flock_size", d.options.min_flock_size);
  s.finish();
  return d;
}

inline std::vector<CapRow> parse_rows(Section& s, const std::string& key, std::vector<std::string>& errors) {
  std::vector<CapRow> rows;
  const auto& arr = s.raw(key);
  if (!arr.is_array()) {
    s.error(key + ": expected a list of {bound, max_per_day, fraction}");
    return rows;
  }
  for (std::size_t i = 0; i < arr.size(); ++i) {
    Section r(arr[i], "rows[" + std::to_string(i) + "].", errors);
    CapRow row;
    if (r.has("bound")) {
      if (arr[i].at("bound").is_string() && arr[i].at("bound") == "inf") row.bound = kNever;
      else r.get("bound", row.bound);
    }
    r.require("max_per_day", row.max_per_day);
    r.require("fraction", row.fraction);
    r.finish();
    rows.push_back(row);
  }
  return rows;
}

inline CullingPolicy parse_policy(Section s, std::vector<std::string>& errors) {
  CullingPolicy p;
  std::string mode = "none";
  s.get("mode", mode);
  try {
    p.mode = parse_policy_mode(mode);
  } catch (const InputError& e) {
    s.error(std::string("mode: ") + e.what());
  }
  s.get("radius", p.radius);
  if (s.has("rows")) p.rows = parse_rows(s, "rows", errors);
  s.finish();
  try {
    p.validate();
  } catch (const InputError& e) {
    errors.push_back(e.what());
  }
  return p;
}

inline std::vector<double> parse_curve_knots(Section& s, const std::string& key, std::vector<std::string>& errors) {
  std::vector<double> out;
  const auto& v = s.raw(key);
  if (v.is_array()) {
    s.get(key, out);
    return out;
  }
  Section r(v, key + ".", errors);
  double from = 0.0, to = 0.0, step = 0.0;
  r.require("from", from);
  r.require("to", to);
  r.require("step", step);
  r.finish();
  if (!(step > 0.0) || !(to >= from)) {
    errors.push_back(key + ": need step > 0 and to >= from");
    return out;
  }
  for (std::size_t i = 0;; ++i) {
    double d = from + step * static_cast<double>(i);
    if (d > to + 1e-9 * step) break;
    out.push_back(d);
  }
  return out;
}

}  // namespace detail

/// Parses and validates a configuration document. Throws ConfigError with
/// every problem found.
inline RunConfig parse_run_config(const nlohmann::json& doc) {
  std::vector<std::string> errors;
  RunConfig cfg;
  cfg.source = doc;
  detail::Section root(doc, "", errors);
  {
    std::uint64_t seed = 0;
    if (root.has("seed")) {
      root.get("seed", seed);
      cfg.seed = seed;
    }
  }
  root.get("workers", cfg.workers);
  root.get("output_dir", cfg.output_dir);
  if (root.has("data")) cfg.data = detail::parse_data_section(root.child("data"));
  else root.child("data");

  if (root.has("simulate")) {
    cfg.has_simulate = true;
    auto s = root.child("simulate");
    auto& sim = cfg.simulate;
    if (s.has("layout")) {
      auto lay = s.child("layout");
      if (lay.has("farm_file")) {
        DataConfig d;
        lay.get("farm_file", d.farm_file);
        std::string mode = "days";
        lay.get("date_mode", mode);
        d.options.date_mode = mode == "iso" ? DateMode::iso : DateMode::days;
        sim.layout_file = d;
      }
      if (lay.has("synthetic")) {
        auto syn = lay.child("synthetic");
        syn.require("count", sim.synthetic_count);
        syn.require("side_km", sim.synthetic_side_km);
        syn.finish();
      }
      lay.finish();
      if (!sim.layout_file && sim.synthetic_count == 0)
        errors.push_back("simulate.layout: give either farm_file or synthetic {count, side_km}");
      if (sim.layout_file && sim.synthetic_count)
        errors.push_back("simulate.layout: farm_file and synthetic are mutually exclusive");
    } else {
      errors.push_back("simulate.layout: required");
    }
    {
      auto k = s.child("kernel");
      k.get("id", sim.kernel.id);
      k.get("b0", sim.kernel.b0);
      k.get("b1", sim.kernel.b1);
      k.get("b2", sim.kernel.b2);
      k.finish();
      try {
        sim.kernel.rate().validate();
      } catch (const InputError& e) {
        errors.push_back(std::string("simulate.kernel: ") + e.what());
      }
    }
    s.get("lambda", sim.lambda);
    s.get("gamma", sim.gamma);
    if (s.has("omega")) {
      const auto& o = s.raw("omega");
      if (o.is_string() && o == "first-by-seed") sim.omega.reset();
      else if (o.is_number_integer()) sim.omega = o.get<FarmId>();
      else errors.push_back("simulate.omega: expected a farm id or \"first-by-seed\"");
    }
    if (s.has("policy")) sim.policy = detail::parse_policy(s.child("policy"), errors);
    else s.child("policy");
    s.get("replicates", sim.replicates);
    s.get("min_infections", sim.min_infections);
    s.get("max_attempts", sim.max_attempts);
    s.finish();
    if (!(sim.lambda > 0.0) || !(sim.gamma > 0.0)) errors.push_back("simulate.lambda and simulate.gamma must be > 0");
    if (sim.replicates == 0) errors.push_back("simulate.replicates must be >= 1");
  } else {
    root.child("simulate");
  }

  if (root.has("fit")) {
    cfg.has_fit = true;
    auto f = root.child("fit");
    auto& sc = cfg.fit.sampler;
    f.get("chains", cfg.fit.chains);
    f.get("checkpoint_interval", cfg.fit.checkpoint_interval);
    f.get("alpha", sc.prior.alpha);
    f.get("lambda", sc.prior.lambda);
    f.get("initial_l", sc.initial_l);
    f.get("fixed_l", sc.fixed_l);
    f.get("init_gamma", sc.init_gamma);
    f.get("truncation_km", sc.truncation);
    f.get("likelihood_enabled", sc.likelihood_enabled);
    f.get("init_retries", sc.init_retries);
    {
      auto g = f.child("grid");
      g.get("count", sc.grid.count);
      g.get("max_distance", sc.grid.max_distance);
      g.get("knots", sc.grid.knots);
      if (g.has("knot_file")) {
        std::string path;
        g.get("knot_file", path);
        try {
          sc.grid.knots = read_knot_file(path);
        } catch (const InputError& e) {
          errors.push_back(std::string("fit.grid.knot_file: ") + e.what());
        }
      }
      g.finish();
    }
    {
      auto p = f.child("priors");
      p.get("l_rate", sc.prior.l_rate);
      p.get("gamma_rate", sc.prior.gamma_rate);
      p.get("i_omega_rate", sc.prior.i_omega_rate);
      p.finish();
    }
    {
      auto t = f.child("tuning");
      auto& tu = sc.tuning;
      t.get("delta", tu.delta);
      t.get("sigma_l", tu.sigma_l);
      t.get("sigma_gamma", tu.sigma_gamma);
      t.get("sigma_i_omega", tu.sigma_i_omega);
      t.get("moves_per_iteration", tu.moves_per_iteration);
      t.get("iterations", tu.iterations);
      t.get("burn_in", tu.burn_in);
      t.get("thinning", tu.thinning);
      t.get("adapt", tu.adapt);
      t.get("audit_interval", tu.audit_interval);
      t.finish();
    }
    {
      auto j = f.child("jitter");
      j.get("start", sc.jitter.start);
      j.get("factor", sc.jitter.factor);
      j.get("cap", sc.jitter.cap);
      j.get("min_pivot", sc.jitter.min_pivot);
      j.finish();
    }
    f.finish();
    try {
      sc.tuning.validate();
      sc.prior.validate();
    } catch (const InputError& e) {
      errors.push_back(std::string("fit: ") + e.what());
    }
    if (cfg.fit.chains == 0) errors.push_back("fit.chains must be >= 1");
    if (!(sc.initial_l > 0.0)) errors.push_back("fit.initial_l must be > 0");
  } else {
    root.child("fit");
  }

  if (root.has("summarize")) {
    cfg.has_summarize = true;
    auto s = root.child("summarize");
    s.get("traces", cfg.summarize.traces);
    if (s.has("curve_knots")) cfg.summarize.curve_knots = detail::parse_curve_knots(s, "curve_knots", errors);
    s.get("truth_file", cfg.summarize.truth_file);
    s.finish();
  } else {
    root.child("summarize");
  }

  if (root.has("predict")) {
    cfg.has_predict = true;
    auto p = root.child("predict");
    auto& pr = cfg.predict;
    p.get("traces", pr.traces);
    p.get("radii", pr.radii);
    std::string mode = "capped_ring";
    p.get("mode", mode);
    try {
      pr.mode = parse_policy_mode(mode);
    } catch (const InputError& e) {
      errors.push_back(std::string("predict.mode: ") + e.what());
    }
    if (p.has("rows")) pr.rows = detail::parse_rows(p, "rows", errors);
    p.get("replicates_per_draw", pr.replicates_per_draw);
    p.get("max_draws", pr.max_draws);
    {
      auto c = p.child("compensation");
      c.get("broiler", pr.compensation.euros_per_bird[0]);
      c.get("duck", pr.compensation.euros_per_bird[1]);
      c.get("turkey", pr.compensation.euros_per_bird[2]);
      c.get("layer", pr.compensation.euros_per_bird[3]);
      c.finish();
    }
    p.finish();
    for (double r : pr.radii)
      if (!(r >= 0.0)) errors.push_back("predict.radii must be >= 0");
    if (pr.replicates_per_draw == 0) errors.push_back("predict.replicates_per_draw must be >= 1");
  } else {
    root.child("predict");
  }

  {
    auto v = root.child("validate");
    v.get("likelihood_instances", cfg.validate.likelihood_instances);
    v.get("delta_moves", cfg.validate.delta_moves);
    v.get("identity_tuples", cfg.validate.identity_tuples);
    v.get("prior_sweeps", cfg.validate.prior_sweeps);
    v.get("perturb_likelihood", cfg.validate.perturb_likelihood);
    v.finish();
  }
  root.finish();
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file '" + path + "'"});
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError({"config '" + path + "' is not valid JSON: " + e.what()});
  }
  return parse_run_config(doc);
}

/// FNV-1a over the canonical dump, printed as 16 hex digits.
inline std::string config_hash(const nlohmann::json& doc) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : doc.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << h;
  return out.str();
}

}  // namespace gpepi

#endif  // GPEPI_CONFIG_HPP
