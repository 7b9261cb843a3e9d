#ifndef GPEPI_DATA_HPP
#define GPEPI_DATA_HPP

// Farm data ingestion: farm files, the observed status partition, planar
// distances and the pseudo-distance grid.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gpepi/core.hpp"

namespace gpepi {

enum class FlockType { broiler, duck, turkey, layer };

inline std::string_view to_string(FlockType t) {
  switch (t) {
    case FlockType::broiler: return "broiler";
    case FlockType::duck: return "duck";
    case FlockType::turkey: return "turkey";
    case FlockType::layer: return "layer";
  }
  return "?";
}

inline std::optional<FlockType> parse_flock_type(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "broiler") return FlockType::broiler;
  if (lower == "duck") return FlockType::duck;
  if (lower == "turkey") return FlockType::turkey;
  if (lower == "layer") return FlockType::layer;
  return std::nullopt;
}

struct FarmRecord {
  FarmId id = 0;
  double x = 0.0;  // km
  double y = 0.0;  // km
  double cull_time = kNever;  // days relative to the time origin
  bool preemptive = false;
  std::optional<FlockType> flock_type;
  std::optional<double> flock_size;

  bool culled() const { return happened(cull_time); }
};

struct Dataset {
  std::vector<FarmRecord> farms;
  /// Calendar date (ISO) or "day <offset>" mapped to t = 0.
  std::string time_origin;

  std::size_t size() const { return farms.size(); }

  std::unordered_map<FarmId, std::size_t> index_map() const {
    std::unordered_map<FarmId, std::size_t> m;
    m.reserve(farms.size());
    for (std::size_t i = 0; i < farms.size(); ++i) m.emplace(farms[i].id, i);
    return m;
  }

  /// Throws InputError if a record invariant is broken.
  void validate() const {
    std::set<FarmId> seen;
    for (const auto& f : farms) {
      if (!seen.insert(f.id).second)
        throw InputError("duplicate farm id " + std::to_string(f.id));
      if (f.preemptive && !f.culled())
        throw InputError("farm " + std::to_string(f.id) + " is pre-emptive but has no cull date");
      if (f.flock_size && *f.flock_size < 0)
        throw InputError("farm " + std::to_string(f.id) + " has negative flock size");
      if (!std::isfinite(f.x) || !std::isfinite(f.y))
        throw InputError("farm " + std::to_string(f.id) + " has non-finite coordinates");
    }
  }
};

/// Shifts all cull times so the earliest natural (non-pre-emptive) cull is
/// at t = 0. Returns the offset that was subtracted.
inline double normalize_time_origin(Dataset& data) {
  double first = kNever;
  for (const auto& f : data.farms)
    if (f.culled() && !f.preemptive) first = std::min(first, f.cull_time);
  if (!happened(first))
    throw InputError("dataset has no naturally culled farm; cannot fix the time origin");
  for (auto& f : data.farms)
    if (f.culled()) f.cull_time -= first;
  return first;
}

// --------------------------------------------------------------------------
// Farm file parsing

enum class DateMode { iso, days };

struct FarmColumns {
  std::string id = "id";
  std::string x = "x";
  std::string y = "y";
  std::string cull_date = "cull_date";
  std::string preemptive = "preemptive";
  std::string flock_type = "flock_type";
  std::string flock_size = "flock_size";
};

struct FarmFileOptions {
  char delimiter = ',';
  DateMode date_mode = DateMode::iso;
  FarmColumns columns;
  /// Drop flocks smaller than this (only when the size is known).
  std::optional<double> min_flock_size;
};

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delim)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

/// Days since 1970-01-01 for an ISO yyyy-mm-dd date.
inline std::optional<long> parse_iso_date(const std::string& s) {
  int y = 0;
  unsigned m = 0, d = 0;
  char dash1 = 0, dash2 = 0;
  std::istringstream ss(s);
  ss >> y >> dash1 >> m >> dash2 >> d;
  if (!ss || dash1 != '-' || dash2 != '-' || ss.peek() != std::char_traits<char>::eof())
    return std::nullopt;
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                  std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days{ymd}.time_since_epoch().count();
}

inline std::string format_iso_date(long days_since_epoch) {
  std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days_since_epoch}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

inline std::optional<bool> parse_flag(const std::string& s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower.empty() || lower == "no" || lower == "n" || lower == "false" || lower == "0" ||
      lower == "-")
    return false;
  if (lower == "yes" || lower == "y" || lower == "true" || lower == "1") return true;
  return std::nullopt;
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  if (!std::isfinite(v)) return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// Parses a delimited farm table. Cull dates become day offsets from the
/// earliest natural cull; farms without a cull date get kNever.
inline Dataset parse_farm_stream(std::istream& in, const FarmFileOptions& opt) {
  using detail::trim;
  std::string line;
  std::size_t row = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++row;
    if (!trim(line).empty()) {
      header = detail::split(line, opt.delimiter);
      break;
    }
  }
  if (header.empty()) throw InputError("farm file is empty");

  auto column = [&](const std::string& name, bool required) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      if (required) throw InputError("farm file header lacks required column '" + name + "'");
      return std::nullopt;
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto& c = opt.columns;
  std::size_t c_id = *column(c.id, true), c_x = *column(c.x, true), c_y = *column(c.y, true);
  std::size_t c_date = *column(c.cull_date, true), c_pre = *column(c.preemptive, true);
  auto c_type = column(c.flock_type, false);
  auto c_size = column(c.flock_size, false);

  Dataset data;
  std::set<FarmId> ids;
  auto fail = [&](const std::string& what) {
    throw InputError("farm file row " + std::to_string(row) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto cells = detail::split(line, opt.delimiter);
    cells.resize(std::max(cells.size(), header.size()));
    FarmRecord f;
    auto id = detail::parse_double(cells[c_id]);
    if (!id || *id != std::floor(*id)) fail("invalid id '" + cells[c_id] + "'");
    f.id = static_cast<FarmId>(*id);
    if (!ids.insert(f.id).second) fail("duplicate id " + std::to_string(f.id));
    auto x = detail::parse_double(cells[c_x]);
    auto y = detail::parse_double(cells[c_y]);
    if (!x || !y) fail("invalid coordinates");
    f.x = *x;
    f.y = *y;
    const std::string& date = cells[c_date];
    if (!date.empty()) {
      if (opt.date_mode == DateMode::iso) {
        auto d = detail::parse_iso_date(date);
        if (!d) fail("unparseable date '" + date + "'");
        f.cull_time = static_cast<double>(*d);
      } else {
        auto d = detail::parse_double(date);
        if (!d || !std::isfinite(*d)) fail("unparseable day offset '" + date + "'");
        f.cull_time = *d;
      }
    }
    auto flag = detail::parse_flag(cells[c_pre]);
    if (!flag) fail("invalid pre-emptive flag '" + cells[c_pre] + "'");
    f.preemptive = *flag;
    if (f.preemptive && !f.culled()) fail("pre-emptive flag set without a cull date");
    if (c_type && !cells[*c_type].empty()) {
      auto t = parse_flock_type(cells[*c_type]);
      if (!t) fail("unknown flock type '" + cells[*c_type] + "'");
      f.flock_type = t;
    }
    if (c_size && !cells[*c_size].empty()) {
      auto s = detail::parse_double(cells[*c_size]);
      if (!s || *s < 0) fail("invalid flock size '" + cells[*c_size] + "'");
      f.flock_size = s;
    }
    if (opt.min_flock_size && f.flock_size && *f.flock_size < *opt.min_flock_size) continue;
    data.farms.push_back(std::move(f));
  }
  if (data.farms.empty()) throw InputError("farm file has a header but no farms");

  double offset = normalize_time_origin(data);
  if (opt.date_mode == DateMode::iso)
    data.time_origin = detail::format_iso_date(static_cast<long>(offset));
  else
    data.time_origin = "day " + detail::format_double(offset);
  data.validate();
  return data;
}

inline Dataset parse_farm_file(const std::string& path, const FarmFileOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open farm file '" + path + "'");
  return parse_farm_stream(in, opt);
}

/// Writes a farm table in day-offset mode; parse_farm_file with
/// DateMode::days reads it back exactly.
inline void write_farm_stream(std::ostream& out, const Dataset& data) {
  out << "id,x,y,cull_date,preemptive,flock_type,flock_size\n";
  for (const auto& f : data.farms) {
    out << f.id << ',' << detail::format_double(f.x) << ',' << detail::format_double(f.y) << ',';
    if (f.culled()) out << detail::format_double(f.cull_time);
    out << ',' << (f.preemptive ? "yes" : "no") << ',';
    if (f.flock_type) out << to_string(*f.flock_type);
    out << ',';
    if (f.flock_size) out << detail::format_double(*f.flock_size);
    out << '\n';
  }
}

// --------------------------------------------------------------------------
// Observed classification

enum class ObservedStatus { never_culled, natural, preemptive };

struct ObservedClassification {
  std::vector<FarmId> set_A;  // never culled
  std::vector<FarmId> set_B;  // naturally culled
  std::vector<FarmId> set_P;  // pre-emptively culled (C or D, unknown)
  std::vector<ObservedStatus> status;  // by dataset index
};

inline ObservedClassification classify(const Dataset& data) {
  ObservedClassification out;
  out.status.reserve(data.size());
  for (const auto& f : data.farms) {
    if (!f.culled()) {
      out.set_A.push_back(f.id);
      out.status.push_back(ObservedStatus::never_culled);
    } else if (f.preemptive) {
      out.set_P.push_back(f.id);
      out.status.push_back(ObservedStatus::preemptive);
    } else {
      out.set_B.push_back(f.id);
      out.status.push_back(ObservedStatus::natural);
    }
  }
  return out;
}

// --------------------------------------------------------------------------
// Distances

/// Euclidean distances between farms in planar km. Immutable after
/// construction.
class DistanceIndex {
 public:
  DistanceIndex() = default;
  explicit DistanceIndex(const Dataset& data) {
    xs_.reserve(data.size());
    ys_.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      xs_.push_back(data.farms[i].x);
      ys_.push_back(data.farms[i].y);
      ids_.emplace(data.farms[i].id, i);
    }
  }

  std::size_t size() const { return xs_.size(); }

  /// Distance between dataset indices.
  double operator()(std::size_t j, std::size_t k) const {
    return std::hypot(xs_[j] - xs_[k], ys_[j] - ys_[k]);
  }

  std::size_t index_of(FarmId id) const {
    auto it = ids_.find(id);
    if (it == ids_.end()) throw InputError("unknown farm id " + std::to_string(id));
    return it->second;
  }

  double distance(FarmId j, FarmId k) const { return (*this)(index_of(j), index_of(k)); }

  double max_distance() const {
    double best = 0.0;
    for (std::size_t j = 0; j < size(); ++j)
      for (std::size_t k = j + 1; k < size(); ++k) best = std::max(best, (*this)(j, k));
    return best;
  }

 private:
  std::vector<double> xs_, ys_;
  std::unordered_map<FarmId, std::size_t> ids_;
};

// --------------------------------------------------------------------------
// Pseudo-distance grid

struct GridSpec {
  /// Equal spacing from 0 to max_distance (or the largest pairwise
  /// distance when unset). Ignored when knots is non-empty.
  std::size_t count = 256;
  std::optional<double> max_distance;
  std::vector<double> knots;
};

inline std::vector<double> build_pseudo_grid(const GridSpec& spec, double max_pairwise) {
  std::vector<double> grid;
  if (!spec.knots.empty()) {
    grid = spec.knots;
    for (std::size_t i = 1; i < grid.size(); ++i)
      if (!(grid[i] > grid[i - 1]))
        throw InputError("pseudo grid knots must be strictly increasing (knot " +
                         std::to_string(i) + ")");
    if (grid.front() != 0.0) throw InputError("pseudo grid must start at 0");
    if (grid.back() < max_pairwise)
      throw InputError("pseudo grid ends at " + detail::format_double(grid.back()) +
                       " km but the largest pairwise distance is " +
                       detail::format_double(max_pairwise) + " km");
    return grid;
  }
  if (spec.count == 0) throw InputError("pseudo grid count must be positive");
  double top = spec.max_distance.value_or(max_pairwise);
  if (spec.count == 1) return {0.0};
  if (!(top > 0.0))
    throw InputError("equal-spaced pseudo grid needs a positive maximum distance");
  if (top < max_pairwise) throw InputError("pseudo grid maximum is below the largest pairwise distance");
  grid.resize(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i)
    grid[i] = top * static_cast<double>(i) / static_cast<double>(spec.count - 1);
  grid.back() = top;
  return grid;
}

/// One knot per line; blank lines and '#' comments ignored.
inline std::vector<double> read_knot_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open knot file '" + path + "'");
  std::vector<double> knots;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    auto t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto v = detail::parse_double(t);
    if (!v) throw InputError("knot file row " + std::to_string(row) + ": not a number");
    knots.push_back(*v);
  }
  return knots;
}

}  // namespace gpepi

#endif  // GPEPI_DATA_HPP
