#pragma once

// Serialization: spec documents (JSON) and the CSV layouts of each module.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "rba/engine.hpp"
#include "rba/errors.hpp"
#include "rba/piles.hpp"
#include "rba/profiles.hpp"
#include "rba/size_spec.hpp"

namespace rba {

using json = nlohmann::json;

// --- spec documents --------------------------------------------------------
//
//   {"n": 100, "kind": "deterministic", "parameters": {"k": 2}}
//   {"n": 100, "kind": "two_point",     "parameters": {"a": 1.0}}
//   {"n": 100, "kind": "table",         "parameters": {"table": [[2, 0.5], [4, 0.5]]}}

inline json spec_to_json(const BlockSizeSpec& spec) {
  json j;
  j["n"] = spec.n();
  j["kind"] = to_string(spec.kind());
  switch (spec.kind()) {
    case SpecKind::deterministic: j["parameters"] = {{"k", static_cast<int>(spec.parameter())}}; break;
    case SpecKind::two_point: j["parameters"] = {{"a", spec.parameter()}}; break;
    case SpecKind::table: {
      json rows = json::array();
      for (const auto& [k, p] : spec.pmf()) rows.push_back({k, p});
      j["parameters"] = {{"table", rows}};
      break;
    }
  }
  return j;
}

namespace detail {

template <class T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  if constexpr (std::is_same_v<T, bool>) {
    if (!j.at(key).is_boolean()) throw ConfigError(where + ": field '" + key + "' must be true or false");
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.at(key).is_number_integer()) throw ConfigError(where + ": field '" + key + "' must be an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (!j.at(key).is_number_unsigned() && j.at(key).get<std::int64_t>() < 0)
        throw ConfigError(where + ": field '" + key + "' must be nonnegative");
    }
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace detail

/// Parses a spec document; domain violations surface as ConfigError. As
/// input conveniences, a deterministic spec may give k_exponent (k =
/// floor(n^k_exponent)) and a two-point spec a_times_log_n (a = value / log n).
inline BlockSizeSpec spec_from_json(const json& j) {
  const auto n = detail::require<int>(j, "n", "spec");
  const auto kind = detail::require<std::string>(j, "kind", "spec");
  const json params = j.contains("parameters") ? j.at("parameters") : json::object();
  try {
    if (kind == "deterministic") {
      if (params.contains("k_exponent") && !params.contains("k"))
        return make_deterministic(n, power_block_size(n, detail::require<double>(params, "k_exponent", "spec.parameters")));
      return make_deterministic(n, detail::require<int>(params, "k", "spec.parameters"));
    }
    if (kind == "two_point") {
      if (params.contains("a_times_log_n") && !params.contains("a"))
        return make_two_point(n, detail::require<double>(params, "a_times_log_n", "spec.parameters") /
                                     std::log(static_cast<double>(n)));
      return make_two_point(n, detail::require<double>(params, "a", "spec.parameters"));
    }
    if (kind == "table") {
      const auto rows = detail::require<json>(params, "table", "spec.parameters");
      if (!rows.is_array()) throw ConfigError("spec.parameters.table must be a list of [k, p] pairs");
      std::map<int, double> table;
      for (const auto& row : rows) {
        if (!row.is_array() || row.size() != 2 || !row[0].is_number_integer() || !row[1].is_number())
          throw ConfigError("spec.parameters.table entries must be [k, p] pairs");
        const int k = row[0].get<int>();
        if (table.count(k)) throw ConfigError("spec.parameters.table lists k = " + std::to_string(k) + " twice");
        table[k] = row[1].get<double>();
      }
      return make_table(n, table);
    }
  } catch (const DomainError& e) {
    throw ConfigError(std::string("spec: ") + e.what());
  }
  throw ConfigError("spec: unknown kind '" + kind + "'");
}

// --- CSV -------------------------------------------------------------------

/// 17 significant digits: round-trips every double and keeps output byte-stable.
inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

inline void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& rec) {
  os << "t,d_tv,entropy,l2_sq,max_mass\n";
  for (const auto& e : rec.entries)
    os << e.t << ',' << fmt(e.d_tv) << ',' << fmt(e.entropy) << ',' << fmt(e.l2_sq) << ',' << fmt(e.max_mass)
       << '\n';
}

inline json trajectory_sidecar(const TrajectoryRecord& rec, const BlockSizeSpec& spec) {
  json j;
  j["seed"] = rec.seed;
  j["replica"] = rec.replica;
  j["spec"] = spec_to_json(spec);
  j["tau_start"] = rec.tau_start ? json(*rec.tau_start) : json(nullptr);
  j["steps"] = rec.steps;
  j["truncated_points"] = rec.truncated_points;
  return j;
}

struct GenerationRow {
  std::uint64_t t = 0;
  GenerationHistogram histogram;
};

/// The dust row uses j = below_floor.
inline void write_generation_csv(std::ostream& os, const std::vector<GenerationRow>& rows) {
  os << "t,j,mass\n";
  for (const auto& r : rows) {
    for (const auto& [j, m] : r.histogram.mass) os << r.t << ',' << j << ',' << fmt(m) << '\n';
    os << r.t << ",below_floor," << fmt(r.histogram.dust) << '\n';
  }
}

inline void write_meeting_csv(std::ostream& os, const std::vector<MeetingEstimate>& rows) {
  os << "t,theta,estimate,stderr,bound\n";
  for (const auto& r : rows)
    os << r.t << ',' << fmt(r.theta) << ',' << fmt(r.estimate) << ',' << fmt(r.std_error) << ','
       << fmt(r.bound) << '\n';
}

inline void write_profile_csv(std::ostream& os, const std::vector<ProfilePoint>& points) {
  os << "beta,value\n";
  for (const auto& p : points) os << fmt(p.x) << ',' << fmt(p.value) << '\n';
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open output file '" + path + "'");
  return os;
}

}  // namespace rba
