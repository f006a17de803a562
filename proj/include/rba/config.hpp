#pragma once

// Experiment configuration: a JSON document parsed into ExperimentConfig.
// The schema is documented in docs/config.md.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rba/engine.hpp"
#include "rba/errors.hpp"
#include "rba/io.hpp"
#include "rba/profiles.hpp"
#include "rba/size_spec.hpp"

namespace rba {

enum class ScheduleMode { absolute, grid, beta, tau_start_beta, entropic };

inline const char* to_string(ScheduleMode m) {
  switch (m) {
    case ScheduleMode::absolute: return "absolute";
    case ScheduleMode::grid: return "grid";
    case ScheduleMode::beta: return "beta";
    case ScheduleMode::tau_start_beta: return "tau_start_beta";
    case ScheduleMode::entropic: return "entropic";
  }
  return "absolute";
}

/// One requested recording point: its label x (t, beta or s, by mode) and
/// the step it maps to (an offset from tau_start in tau_start_beta mode).
struct SchedulePoint {
  double x = 0.0;
  std::uint64_t t = 0;
};

/// Half-up rounding to the nearest step.
inline std::uint64_t round_half_up(double x) {
  if (!(x >= 0.0)) throw ConfigError("scheduled time " + fmt(x) + " is negative");
  return static_cast<std::uint64_t>(std::floor(x + 0.5));
}

struct ScheduleConfig {
  ScheduleMode mode = ScheduleMode::absolute;
  std::vector<double> values;  // times, betas or s, by mode
  std::uint64_t grid_start = 0, grid_stop = 0, grid_stride = 1;

  bool tau_relative() const { return mode == ScheduleMode::tau_start_beta; }

  /// absolute/grid: t as given. beta: t_*(beta) = t_ent + beta t_w, half-up.
  /// tau_start_beta: floor(beta n / E[X]) after tau_start. entropic: s t_ent, half-up.
  std::vector<SchedulePoint> resolve(const BlockSizeSpec& spec) const {
    std::vector<SchedulePoint> out;
    const auto ts = timescales(spec);
    switch (mode) {
      case ScheduleMode::absolute:
        for (double v : values) out.push_back({v, static_cast<std::uint64_t>(v)});
        break;
      case ScheduleMode::grid:
        for (std::uint64_t t = grid_start; t <= grid_stop; t += grid_stride)
          out.push_back({static_cast<double>(t), t});
        break;
      case ScheduleMode::beta:
        if (!std::isfinite(ts.t_ent) || !std::isfinite(ts.t_w))
          throw ConfigError("beta schedule needs finite t_ent and t_w");
        for (double b : values) out.push_back({b, round_half_up(ts.t_star(b))});
        break;
      case ScheduleMode::tau_start_beta: {
        const double unit = spec.n() / spec.mean();
        for (double b : values) {
          if (!(b >= 0.0)) throw ConfigError("tau_start_beta values must be nonnegative");
          out.push_back({b, static_cast<std::uint64_t>(std::floor(b * unit * (1.0 + 1e-12)))});
        }
        break;
      }
      case ScheduleMode::entropic:
        for (double s : values) out.push_back({s, round_half_up(s * ts.t_ent)});
        break;
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
    return out;
  }
};

struct LedgerConfig {
  bool enabled = false;
  double a = 10.0;
  double eps = 0.1;
  double floor = 0.0;  // 0 selects 1 / (n 2^20)
  bool generations = false;
};

struct ProbeConfig {
  bool enabled = false;
  std::vector<double> thetas;
  std::vector<std::uint64_t> times;
  std::uint64_t pairs = 10000;
};

struct ReferenceConfig {
  bool enabled = false;
  ProfileKind kind = ProfileKind::gaussian_cutoff;
  std::optional<double> parameter;
};

struct OutputConfig {
  std::string aggregate;     // aggregate CSV
  std::string manifest;      // run manifest JSON
  std::string trajectories;  // directory for per-replica CSV + sidecar
  std::string generations;   // generation CSV of replica 0
  std::string meeting;       // meeting probe CSV
};

struct BudgetConfig {
  std::uint64_t max_steps = 4'000'000'000ULL;  // per replica
  double max_seconds = 0.0;                    // 0 means unlimited
  std::uint64_t max_buckets = 20'000'000;      // worst-case aggregate ledger entries
};

struct ExperimentConfig {
  BlockSizeSpec spec = make_deterministic(2, 2);
  StartKind start = StartKind::dirac;
  std::size_t x0 = 0;
  std::size_t start_k = 0;
  ScheduleConfig schedule;
  std::optional<std::uint64_t> t_max;
  std::uint64_t replicas = 1;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  LedgerConfig ledger;
  ProbeConfig probes;
  ReferenceConfig reference;
  OutputConfig output;
  BudgetConfig budget;
  RegimeThresholds regime;
  json source;  // the parsed document, echoed into the manifest
};

namespace detail {

template <class T>
T optional_field(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return require<T>(j, key, where);
}

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw ConfigError(where + ": unknown field '" + item.key() + "'");
  }
}

inline std::vector<double> number_list(const json& j, const char* key, const std::string& where) {
  const auto arr = require<json>(j, key, where);
  if (!arr.is_array() || arr.empty()) throw ConfigError(where + "." + key + " must be a nonempty list");
  std::vector<double> out;
  for (const auto& v : arr) {
    if (!v.is_number()) throw ConfigError(where + "." + key + " must contain numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& doc) {
  using detail::check_keys;
  using detail::optional_field;
  ExperimentConfig c;
  c.source = doc;
  check_keys(doc, {"spec", "start", "schedule", "t_max", "replicas", "seed", "workers", "ledger", "probes",
                   "reference", "output", "budget", "regime"},
             "config");
  c.spec = spec_from_json(detail::require<json>(doc, "spec", "config"));
  const auto n = static_cast<std::size_t>(c.spec.n());

  if (doc.contains("start")) {
    const auto& s = doc.at("start");
    check_keys(s, {"kind", "x0", "k"}, "start");
    const auto kind = optional_field<std::string>(s, "kind", "dirac", "start");
    c.x0 = optional_field<std::size_t>(s, "x0", 0, "start");
    if (c.x0 >= n) throw ConfigError("start.x0 must lie in [0, n)");
    if (kind == "dirac") {
      c.start = StartKind::dirac;
    } else if (kind == "eta_start") {
      c.start = StartKind::eta_start;
      const auto fallback = c.spec.is_deterministic() ? static_cast<std::size_t>(c.spec.deterministic_size()) : 0;
      c.start_k = optional_field<std::size_t>(s, "k", fallback, "start");
      if (c.start_k < 1 || c.start_k > n) throw ConfigError("start.k must lie in [1, n]");
    } else {
      throw ConfigError("start.kind must be dirac or eta_start");
    }
  }

  {
    const auto& s = detail::require<json>(doc, "schedule", "config");
    check_keys(s, {"mode", "times", "start", "stop", "stride", "betas", "s"}, "schedule");
    const auto mode = detail::require<std::string>(s, "mode", "schedule");
    auto& sc = c.schedule;
    if (mode == "absolute") {
      sc.mode = ScheduleMode::absolute;
      for (double v : detail::number_list(s, "times", "schedule")) {
        if (!(v >= 0.0) || v != std::floor(v)) throw ConfigError("schedule.times must be nonnegative integers");
        sc.values.push_back(v);
      }
    } else if (mode == "grid") {
      sc.mode = ScheduleMode::grid;
      sc.grid_start = optional_field<std::uint64_t>(s, "start", 0, "schedule");
      sc.grid_stop = detail::require<std::uint64_t>(s, "stop", "schedule");
      sc.grid_stride = optional_field<std::uint64_t>(s, "stride", 1, "schedule");
      if (sc.grid_stride == 0) throw ConfigError("schedule.stride must be positive");
      if (sc.grid_stop < sc.grid_start) throw ConfigError("schedule.stop is below schedule.start");
    } else if (mode == "beta") {
      sc.mode = ScheduleMode::beta;
      sc.values = detail::number_list(s, "betas", "schedule");
    } else if (mode == "tau_start_beta") {
      sc.mode = ScheduleMode::tau_start_beta;
      sc.values = detail::number_list(s, "betas", "schedule");
    } else if (mode == "entropic") {
      sc.mode = ScheduleMode::entropic;
      sc.values = detail::number_list(s, "s", "schedule");
    } else {
      throw ConfigError("schedule.mode must be one of absolute, grid, beta, tau_start_beta, entropic");
    }
    sc.resolve(c.spec);  // surfaces unmappable schedules now
  }

  if (doc.contains("t_max") && !doc.at("t_max").is_null())
    c.t_max = detail::require<std::uint64_t>(doc, "t_max", "config");
  c.replicas = optional_field<std::uint64_t>(doc, "replicas", 1, "config");
  if (c.replicas < 1) throw ConfigError("replicas must be at least 1");
  c.seed = optional_field<std::uint64_t>(doc, "seed", 1, "config");
  c.workers = optional_field<unsigned>(doc, "workers", 1, "config");
  if (c.workers < 1) throw ConfigError("workers must be at least 1");

  if (doc.contains("ledger")) {
    const auto& l = doc.at("ledger");
    check_keys(l, {"enabled", "a", "eps", "floor", "generations"}, "ledger");
    c.ledger.enabled = optional_field<bool>(l, "enabled", true, "ledger");
    c.ledger.a = optional_field<double>(l, "a", c.ledger.a, "ledger");
    c.ledger.eps = optional_field<double>(l, "eps", c.ledger.eps, "ledger");
    c.ledger.floor = optional_field<double>(l, "floor", 0.0, "ledger");
    c.ledger.generations = optional_field<bool>(l, "generations", false, "ledger");
    if (!(c.ledger.a > 1.0)) throw ConfigError("ledger.a must exceed 1");
    if (!(c.ledger.eps > 0.0 && c.ledger.eps < 1.0)) throw ConfigError("ledger.eps must lie in (0, 1)");
    if (!(c.ledger.floor >= 0.0 && c.ledger.floor < 1.0)) throw ConfigError("ledger.floor must lie in [0, 1)");
    const double floor = c.ledger.floor > 0.0 ? c.ledger.floor : PileLedger::default_floor(n);
    if (c.ledger.a / static_cast<double>(n) < floor)
      throw ConfigError("ledger.a / n lies below the ledger floor " + fmt(floor));
    if (c.ledger.generations && !c.spec.is_deterministic())
      throw ConfigError("ledger.generations needs a deterministic block size");
  }

  if (doc.contains("probes")) {
    const auto& p = doc.at("probes");
    check_keys(p, {"enabled", "thetas", "times", "pairs"}, "probes");
    c.probes.enabled = optional_field<bool>(p, "enabled", true, "probes");
    if (c.probes.enabled) {
      c.probes.thetas = detail::number_list(p, "thetas", "probes");
      for (double th : c.probes.thetas)
        if (!(th > 0.0 && th <= 1.0)) throw ConfigError("probes.thetas must lie in (0, 1]");
      for (double t : detail::number_list(p, "times", "probes")) {
        if (!(t >= 0.0) || t != std::floor(t)) throw ConfigError("probes.times must be nonnegative integers");
        c.probes.times.push_back(static_cast<std::uint64_t>(t));
      }
      c.probes.pairs = optional_field<std::uint64_t>(p, "pairs", c.probes.pairs, "probes");
      if (c.probes.pairs < 1) throw ConfigError("probes.pairs must be at least 1");
    }
  }

  if (doc.contains("reference")) {
    const auto& r = doc.at("reference");
    check_keys(r, {"kind", "parameter"}, "reference");
    c.reference.enabled = true;
    try {
      c.reference.kind = profile_kind_from_string(detail::require<std::string>(r, "kind", "reference"));
    } catch (const DomainError& e) {
      throw ConfigError(std::string("reference: ") + e.what());
    }
    if (r.contains("parameter") && !r.at("parameter").is_null())
      c.reference.parameter = detail::require<double>(r, "parameter", "reference");
    if ((c.reference.kind == ProfileKind::poisson_noncutoff || c.reference.kind == ProfileKind::half_cutoff) &&
        !c.reference.parameter)
      throw ConfigError("reference.parameter is required for " + std::string(to_string(c.reference.kind)));
  }

  if (doc.contains("output")) {
    const auto& o = doc.at("output");
    check_keys(o, {"aggregate", "manifest", "trajectories", "generations", "meeting"}, "output");
    c.output.aggregate = optional_field<std::string>(o, "aggregate", "", "output");
    c.output.manifest = optional_field<std::string>(o, "manifest", "", "output");
    c.output.trajectories = optional_field<std::string>(o, "trajectories", "", "output");
    c.output.generations = optional_field<std::string>(o, "generations", "", "output");
    c.output.meeting = optional_field<std::string>(o, "meeting", "", "output");
  }

  if (doc.contains("budget")) {
    const auto& b = doc.at("budget");
    check_keys(b, {"max_steps", "max_seconds", "max_buckets"}, "budget");
    c.budget.max_steps = optional_field<std::uint64_t>(b, "max_steps", c.budget.max_steps, "budget");
    c.budget.max_seconds = optional_field<double>(b, "max_seconds", 0.0, "budget");
    c.budget.max_buckets = optional_field<std::uint64_t>(b, "max_buckets", c.budget.max_buckets, "budget");
    if (!(c.budget.max_seconds >= 0.0)) throw ConfigError("budget.max_seconds must be nonnegative");
  }

  if (doc.contains("regime")) {
    const auto& r = doc.at("regime");
    check_keys(r, {"mu_over_log_n", "sigma2_over_mu_log_n", "lindeberg", "lindeberg_delta"}, "regime");
    c.regime.mu_over_log_n = optional_field<double>(r, "mu_over_log_n", c.regime.mu_over_log_n, "regime");
    c.regime.sigma2_over_mu_log_n =
        optional_field<double>(r, "sigma2_over_mu_log_n", c.regime.sigma2_over_mu_log_n, "regime");
    c.regime.lindeberg = optional_field<double>(r, "lindeberg", c.regime.lindeberg, "regime");
    c.regime.lindeberg_delta = optional_field<double>(r, "lindeberg_delta", c.regime.lindeberg_delta, "regime");
  }
  return c;
}

inline ExperimentConfig config_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(doc);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_string(ss.str());
}

}  // namespace rba
