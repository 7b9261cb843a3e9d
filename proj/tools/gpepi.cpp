// gpepi: batch front end for simulation, fitting, summaries, predictive
// policy sweeps and self-validation.

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "gpepi/gpepi.hpp"

namespace fs = std::filesystem;
using namespace gpepi;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kConfig = 1, kRuntime = 2, kValidation = 3 };

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::string output_dir;
  bool resume = false;
};

std::string fmt(double v) { return detail::format_double(v); }

struct Run {
  RunConfig cfg;
  std::string command;
  fs::path out;
  unsigned workers = 1;
  std::vector<std::string> outputs;

  std::uint64_t seed() const { return *cfg.seed; }

  void write(const std::string& name, const std::string& text) {
    write_file_atomic(out / name, text);
    outputs.push_back(name);
  }

  void manifest() {
    nlohmann::json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["config_hash"] = config_hash(cfg.source);
    m["seed"] = cfg.seed ? nlohmann::json(*cfg.seed) : nlohmann::json(nullptr);
    m["workers"] = workers;
    m["outputs"] = outputs;
    write_file_atomic(out / ("manifest_" + command + ".json"), m.dump(2) + "\n");
  }
};

std::mutex g_warn_mutex;
void warn(std::string_view msg) {
  std::lock_guard lock(g_warn_mutex);
  std::cerr << "warning: " << msg << '\n';
}

void require_file(const std::string& path, const std::string& what, std::vector<std::string>& errors) {
  if (path.empty()) errors.push_back(what + ": no file given");
  else if (!fs::is_regular_file(path)) errors.push_back(what + ": file '" + path + "' does not exist");
}

std::vector<std::string> trace_paths(const Run& run, const std::vector<std::string>& configured) {
  if (!configured.empty()) return configured;
  std::vector<std::string> out;
  if (fs::is_directory(run.out))
    for (const auto& e : fs::directory_iterator(run.out)) {
      auto name = e.path().filename().string();
      if (name.rfind("chain_", 0) == 0 && e.path().extension() == ".jsonl") out.push_back(e.path().string());
    }
  std::sort(out.begin(), out.end());
  return out;
}

ChainTrace load_pooled(const std::vector<std::string>& paths) {
  std::vector<ChainTrace> traces;
  for (const auto& p : paths) traces.push_back(read_trace(p));
  return pool_traces(std::move(traces));
}

Dataset load_data(const DataConfig& d) { return parse_farm_file(d.farm_file, d.options); }

// ---------------------------------------------------------------- simulate

int cmd_simulate(Run& run) {
  const auto& sc = run.cfg.simulate;
  std::optional<Dataset> fixed_layout;
  if (sc.layout_file) {
    FarmFileOptions opt = sc.layout_file->options;
    fixed_layout = parse_farm_file(sc.layout_file->farm_file, opt);
    for (auto& f : fixed_layout->farms) {
      f.cull_time = kNever;
      f.preemptive = false;
    }
  }
  const ParametricRate rate = sc.kernel.rate();
  const InfectiousPeriodParams params{sc.lambda, sc.gamma};
  const std::size_t max_attempts = sc.max_attempts ? sc.max_attempts : 100 * sc.replicates;

  struct Attempt {
    Dataset layout;
    OutbreakResult result;
  };
  auto run_attempt = [&](std::size_t a) {
    Attempt out;
    if (fixed_layout) {
      out.layout = *fixed_layout;
    } else {
      Rng lrng = make_stream(run.seed(), a, 0);
      out.layout = synthetic_layout(sc.synthetic_count, sc.synthetic_side_km, lrng);
    }
    Rng rng = make_stream(run.seed(), a, 1);
    std::size_t omega = 0;
    if (sc.omega) omega = DistanceIndex(out.layout).index_of(*sc.omega);
    else omega = uniform_index(out.layout.size(), rng);
    auto table = RateTable::from_function(DistanceIndex(out.layout), rate);
    out.result = simulate_outbreak(out.layout, table, params, omega, sc.policy, rng);
    return out;
  };

  fs::create_directories(run.out);
  std::ostringstream summary;
  summary << "replicate,attempt,omega_id,infected,culled,B,C,D,compensation,truth_infection_sum\n";
  std::size_t kept = 0, attempt = 0;
  const std::size_t batch = std::max<std::size_t>(1, run.workers) * 4;
  while (kept < sc.replicates && attempt < max_attempts) {
    const std::size_t n = std::min(batch, max_attempts - attempt);
    std::vector<Attempt> results(n);
    parallel_for(n, run.workers, [&](std::size_t i) { results[i] = run_attempt(attempt + i); });
    for (std::size_t i = 0; i < n && kept < sc.replicates; ++i) {
      const auto& [layout, res] = results[i];
      if (res.infected() < sc.min_infections) continue;
      ++kept;
      char dir[32];
      std::snprintf(dir, sizeof dir, "replicate_%03zu", kept);
      fs::create_directories(run.out / dir);
      std::ostringstream farms, events, truth;
      write_farm_stream(farms, export_observed(res, layout));
      write_event_log(events, res, layout);
      write_truth(truth, res, layout);
      run.write(std::string(dir) + "/farms.csv", farms.str());
      run.write(std::string(dir) + "/events.csv", events.str());
      run.write(std::string(dir) + "/truth.csv", truth.str());
      std::string comp;
      try {
        comp = fmt(compensation(res, layout, {}));
      } catch (const InputError&) {
        comp = "";
      }
      summary << kept << ',' << attempt + i << ',' << layout.farms[res.omega].id << ',' << res.infected() << ','
              << res.culled() << ',' << res.count(FarmSet::B) << ',' << res.count(FarmSet::C) << ','
              << res.count(FarmSet::D) << ',' << comp << ',' << fmt(truth_infection_sum(res)) << '\n';
    }
    attempt += n;
  }
  run.write("simulate_summary.csv", summary.str());
  run.manifest();
  std::cout << "kept " << kept << " of " << attempt << " simulated outbreaks\n";
  if (kept < sc.replicates) {
    std::cerr << "error: only " << kept << " outbreaks reached " << sc.min_infections
              << " infections within " << max_attempts << " attempts\n";
    return kRuntime;
  }
  return kOk;
}

// --------------------------------------------------------------------- fit

int cmd_fit(Run& run, bool resume) {
  const Dataset data = load_data(*run.cfg.data);
  const auto& fc = run.cfg.fit;
  fs::create_directories(run.out);
  std::vector<nlohmann::json> chain_reports(fc.chains);
  parallel_for(fc.chains, run.workers, [&](std::size_t c) {
    Sampler sampler(data, fc.sampler, make_stream(run.seed(), c), warn);
    char name[64];
    std::snprintf(name, sizeof name, "chain_%02zu", c);
    ChainFiles files{run.out / (std::string(name) + ".jsonl"), run.out / (std::string("checkpoint_") + (name + 6) + ".json"),
                     fc.checkpoint_interval, resume};
    run_chain(sampler, sampler.header(c, run.seed(), run.cfg.source.value("fit", nlohmann::json::object())), files);
    nlohmann::json rep;
    rep["chain"] = c;
    for (std::size_t u = 0; u < kUpdateNames.size(); ++u) {
      const auto& st = sampler.stats();
      rep["acceptance"][kUpdateNames[u]] = {{"proposed", st.proposed[u]}, {"accepted", st.accepted[u]}};
    }
    rep["final_tuning"] = {{"delta", sampler.tuning().delta},
                           {"sigma_l", sampler.tuning().sigma_l},
                           {"sigma_gamma", sampler.tuning().sigma_gamma}};
    rep["retained"] = sampler.tuning().retained_count();
    chain_reports[c] = rep;
  });
  for (std::size_t c = 0; c < fc.chains; ++c) {
    char name[32];
    std::snprintf(name, sizeof name, "chain_%02zu.jsonl", c);
    run.outputs.push_back(name);
  }
  run.write("fit_summary.json", nlohmann::json(chain_reports).dump(2) + "\n");
  run.manifest();
  return kOk;
}

// --------------------------------------------------------------- summarize

int cmd_summarize(Run& run) {
  const auto& sc = run.cfg.summarize;
  auto paths = trace_paths(run, sc.traces);
  if (paths.empty()) throw ConfigError({"summarize: no trace files given or found in '" + run.out.string() + "'"});
  ChainTrace trace = load_pooled(paths);
  fs::create_directories(run.out);

  const auto knots = sc.curve_knots.empty() ? trace.header.knots : sc.curve_knots;
  auto curve = summarize_curve(trace, knots);
  std::ostringstream c;
  c << "distance,lower,median,upper\n";
  for (std::size_t k = 0; k < curve.knots.size(); ++k)
    c << fmt(curve.knots[k]) << ',' << fmt(curve.lower[k]) << ',' << fmt(curve.median[k]) << ','
      << fmt(curve.upper[k]) << '\n';
  run.write("curve.csv", c.str());

  auto sc_sum = summarize_scalars(trace);
  std::ostringstream s;
  s << "parameter,lower,median,upper\n";
  auto row = [&](const char* name, const Interval& i) {
    s << name << ',' << fmt(i.lower) << ',' << fmt(i.median) << ',' << fmt(i.upper) << '\n';
  };
  row("gamma", sc_sum.gamma);
  row("mean_infectious_period", sc_sum.mean_period);
  row("length_scale", sc_sum.length_scale);
  row("i_omega", sc_sum.i_omega);
  run.write("scalars.csv", s.str());

  std::ostringstream p;
  p << "id,probability\n";
  for (const auto& [id, prob] : infection_probabilities(trace)) p << id << ',' << fmt(prob) << '\n';
  run.write("infection_probabilities.csv", p.str());

  if (sc.truth_file) {
    std::ifstream in(*sc.truth_file);
    auto truth = read_truth(in);
    const double S = truth_infection_sum(truth);
    const double S_hat = posterior_median_infection_sum(trace);
    std::ostringstream t;
    t << "S,S_hat,i_tilde_percent\n" << fmt(S) << ',' << fmt(S_hat) << ',' << fmt(i_tilde(S, S_hat)) << '\n';
    run.write("i_tilde.csv", t.str());
  }
  run.manifest();
  return kOk;
}

// ----------------------------------------------------------------- predict

int cmd_predict(Run& run) {
  const auto& pc = run.cfg.predict;
  auto paths = trace_paths(run, pc.traces);
  if (paths.empty()) throw ConfigError({"predict: no trace files given or found in '" + run.out.string() + "'"});
  ChainTrace trace = load_pooled(paths);
  const Dataset data = load_data(*run.cfg.data);
  PredictiveOptions opt;
  for (double r : pc.radii) {
    CullingPolicy p;
    p.mode = pc.mode;
    p.radius = r;
    p.rows = pc.rows;
    opt.policies.push_back(p);
  }
  opt.replicates_per_draw = pc.replicates_per_draw;
  opt.max_draws = pc.max_draws;
  opt.seed = run.seed();
  opt.workers = run.workers;
  opt.compensation = pc.compensation;
  auto res = posterior_predictive(trace, data, opt);
  fs::create_directories(run.out);

  std::ostringstream t;
  t << "radius_km,mode,infected_median,infected_lower,infected_upper,culled_median,culled_lower,culled_upper,"
       "compensation_median_eur,compensation_lower_eur,compensation_upper_eur\n";
  std::ostringstream r;
  r << "radius_km,draw,replicate,infected,culled,compensation_eur\n";
  for (const auto& row : res.rows) {
    t << fmt(row.policy.radius) << ',' << to_string(row.policy.mode) << ',' << fmt(row.infected.median) << ','
      << fmt(row.infected.lower) << ',' << fmt(row.infected.upper) << ',' << fmt(row.culled.median) << ','
      << fmt(row.culled.lower) << ',' << fmt(row.culled.upper) << ',' << fmt(row.compensation.median) << ','
      << fmt(row.compensation.lower) << ',' << fmt(row.compensation.upper) << '\n';
    for (const auto& rep : row.replicates)
      r << fmt(row.policy.radius) << ',' << rep.draw << ',' << rep.replicate << ',' << rep.infected << ','
        << rep.culled << ',' << fmt(rep.compensation) << '\n';
  }
  run.write("predictive.csv", t.str());
  run.write("predictive_replicates.csv", r.str());
  run.manifest();
  return kOk;
}

// ---------------------------------------------------------------- validate

int cmd_validate(Run& run) {
  const auto& vc = run.cfg.validate;
  const std::uint64_t seed = run.cfg.seed.value_or(20030301);
  std::vector<SuiteResult> results;
  results.push_back(likelihood_oracle_suite(vc.likelihood_instances, seed, vc.perturb_likelihood));
  results.push_back(delta_contract_suite(vc.delta_moves, seed, vc.perturb_likelihood));
  results.push_back(proposal_identity_suite(vc.identity_tuples, seed));
  results.push_back(prior_reproduction_suite(vc.prior_sweeps, seed));
  std::ostringstream report;
  bool all = true;
  for (const auto& r : results) {
    all = all && r.passed;
    report << (r.passed ? "PASS " : "FAIL ") << r.name << " max_discrepancy=" << fmt(r.metric)
           << " tolerance=" << fmt(r.tolerance) << " | " << r.detail << '\n';
  }
  std::cout << report.str();
  if (!run.cfg.output_dir.empty()) {
    fs::create_directories(run.out);
    run.write("validate_report.txt", report.str());
    run.manifest();
  }
  return all ? kOk : kValidation;
}

// ---------------------------------------------------------------- plumbing

RunConfig resolve_config(const Globals& g, const std::string& command) {
  RunConfig cfg = g.config_path.empty() ? parse_run_config(nlohmann::json::object()) : load_run_config(g.config_path);
  if (g.seed) cfg.seed = g.seed;
  if (g.workers) cfg.workers = *g.workers;
  if (!g.output_dir.empty()) cfg.output_dir = g.output_dir;

  std::vector<std::string> errors;
  const bool stochastic = command == "simulate" || command == "fit" || command == "predict";
  if (stochastic && !cfg.seed) errors.push_back("seed: required for '" + command + "' (config or --seed)");
  if (command == "simulate") {
    if (!cfg.has_simulate) errors.push_back("simulate: section required");
    else if (cfg.simulate.layout_file) require_file(cfg.simulate.layout_file->farm_file, "simulate.layout.farm_file", errors);
  }
  if (command == "fit") {
    if (!cfg.has_fit) errors.push_back("fit: section required");
    if (!cfg.data) errors.push_back("data: section required");
    else require_file(cfg.data->farm_file, "data.farm_file", errors);
  }
  if (command == "predict") {
    if (!cfg.has_predict) errors.push_back("predict: section required");
    if (!cfg.data) errors.push_back("data: section required");
    else require_file(cfg.data->farm_file, "data.farm_file", errors);
    for (const auto& t : cfg.predict.traces) require_file(t, "predict.traces", errors);
  }
  if (command == "summarize") {
    for (const auto& t : cfg.summarize.traces) require_file(t, "summarize.traces", errors);
    if (cfg.summarize.truth_file) require_file(*cfg.summarize.truth_file, "summarize.truth_file", errors);
  }
  if (!errors.empty()) throw ConfigError(errors);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian nonparametric spatial epidemic inference and culling-policy evaluation"};
  app.set_version_flag("--version", kVersion);
  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration");
  app.add_option("--seed", g.seed, "master random seed (overrides the config)");
  app.add_option("--workers", g.workers, "worker threads; 1 gives the reference path")->check(CLI::PositiveNumber);
  app.add_option("--output-dir", g.output_dir, "directory for all outputs (overrides the config)");
  app.add_flag("--resume", g.resume, "continue fit chains from their checkpoints");
  app.require_subcommand(1, 1);
  app.add_subcommand("simulate", "simulate outbreaks under a culling policy");
  app.add_subcommand("fit", "run the data-augmentation MCMC");
  app.add_subcommand("summarize", "summarise traces: rate curve, scalars, infection probabilities");
  app.add_subcommand("predict", "posterior-predictive culling policy sweep");
  app.add_subcommand("validate", "run the built-in oracle and identity suites");
  app.fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  Run run;
  run.command = command;
  try {
    run.cfg = resolve_config(g, command);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  }
  run.out = run.cfg.output_dir;
  run.workers = run.cfg.workers ? run.cfg.workers : default_workers();

  try {
    if (command == "simulate") return cmd_simulate(run);
    if (command == "fit") return cmd_fit(run, g.resume);
    if (command == "summarize") return cmd_summarize(run);
    if (command == "predict") return cmd_predict(run);
    return cmd_validate(run);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
}
