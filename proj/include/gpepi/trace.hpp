#ifndef GPEPI_TRACE_HPP
#define GPEPI_TRACE_HPP

// Chain traces as JSON Lines: a header object followed by one record per
// retained sweep. Infection times are stored sparsely (finite entries
// only).

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gpepi/core.hpp"

namespace gpepi {

inline constexpr int kTraceSchemaVersion = 1;
inline constexpr const char* kTraceFormat = "gpepi-trace";

struct TraceHeader {
  std::vector<double> knots;
  double alpha = 1.0;
  double lambda = 1.0;
  std::size_t farm_count = 0;
  std::vector<FarmId> preemptive_ids;
  std::size_t chain = 0;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
};

struct TraceRecord {
  std::size_t iteration = 0;
  std::vector<double> g_bar;
  double length_scale = 0.0;
  double gamma = 0.0;
  FarmId omega = 0;
  double i_omega = 0.0;
  std::vector<std::pair<FarmId, double>> infection;  // finite entries
  std::vector<FarmId> c_ids;                         // pre-emptive farms flagged infected
  double loglik = kNegInf;
};

struct ChainTrace {
  TraceHeader header;
  std::vector<TraceRecord> records;
};

namespace detail {

inline nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline double from_nullable(const nlohmann::json& j, double fallback) {
  return j.is_null() ? fallback : j.get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const TraceHeader& h) {
  return {{"format", kTraceFormat},        {"schema_version", kTraceSchemaVersion},
          {"knots", h.knots},              {"alpha", h.alpha},
          {"lambda", h.lambda},            {"farm_count", h.farm_count},
          {"preemptive_ids", h.preemptive_ids}, {"chain", h.chain},
          {"seed", h.seed},                {"config", h.config}};
}

inline TraceHeader header_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != kTraceFormat)
    throw InputError("not a trace file (missing format tag)");
  if (j.value("schema_version", 0) != kTraceSchemaVersion)
    throw InputError("unsupported trace schema version " + j.value("schema_version", nlohmann::json()).dump());
  TraceHeader h;
  h.knots = j.at("knots").get<std::vector<double>>();
  h.alpha = j.at("alpha").get<double>();
  h.lambda = j.at("lambda").get<double>();
  h.farm_count = j.at("farm_count").get<std::size_t>();
  h.preemptive_ids = j.at("preemptive_ids").get<std::vector<FarmId>>();
  h.chain = j.value("chain", std::size_t{0});
  h.seed = j.value("seed", std::uint64_t{0});
  h.config = j.value("config", nlohmann::json::object());
  return h;
}

inline nlohmann::json to_json(const TraceRecord& r) {
  nlohmann::json inf = nlohmann::json::array();
  for (const auto& [id, t] : r.infection) inf.push_back({id, t});
  return {{"iteration", r.iteration}, {"g_bar", r.g_bar},   {"l", r.length_scale},
          {"gamma", r.gamma},         {"omega", r.omega},   {"i_omega", r.i_omega},
          {"infection", inf},         {"c", r.c_ids},       {"loglik", detail::finite_or_null(r.loglik)}};
}

inline TraceRecord record_from_json(const nlohmann::json& j) {
  TraceRecord r;
  r.iteration = j.at("iteration").get<std::size_t>();
  r.g_bar = j.at("g_bar").get<std::vector<double>>();
  r.length_scale = j.at("l").get<double>();
  r.gamma = j.at("gamma").get<double>();
  r.omega = j.at("omega").get<FarmId>();
  r.i_omega = j.at("i_omega").get<double>();
  for (const auto& e : j.at("infection")) r.infection.emplace_back(e.at(0).get<FarmId>(), e.at(1).get<double>());
  r.c_ids = j.at("c").get<std::vector<FarmId>>();
  r.loglik = detail::from_nullable(j.at("loglik"), kNegInf);
  return r;
}

inline ChainTrace read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open trace '" + path + "'");
  ChainTrace t;
  std::string line;
  std::size_t row = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path + " line " + std::to_string(row) + ": " + e.what());
    }
    try {
      if (!have_header) {
        t.header = header_from_json(j);
        have_header = true;
      } else {
        t.records.push_back(record_from_json(j));
      }
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path + " line " + std::to_string(row) + ": " + e.what());
    }
  }
  if (!have_header) throw InputError("trace '" + path + "' is empty");
  return t;
}

/// Several chains of the same fit pooled into one trace.
inline ChainTrace pool_traces(std::vector<ChainTrace> traces) {
  if (traces.empty()) throw InputError("no traces to pool");
  ChainTrace out;
  out.header = traces.front().header;
  for (auto& t : traces) {
    if (t.header.knots != out.header.knots || t.header.farm_count != out.header.farm_count)
      throw InputError("traces come from different fits");
    for (auto& r : t.records) out.records.push_back(std::move(r));
  }
  return out;
}

/// Writes `text` to `path` via a temporary file and rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << text;
    out.flush();
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace gpepi

#endif  // GPEPI_TRACE_HPP
