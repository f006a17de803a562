// rba: command-line front end.
//
// Exit codes: 0 success, 1 validation failure, 2 configuration error,
// 3 resource cap (partial results are still written).

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rba/rba.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitConfig = 2;
constexpr int kExitResource = 3;

struct SpecFlags {
  std::string file;
  int n = 0;
  std::optional<int> k;
  std::optional<double> k_exponent;
  std::optional<double> a;
  std::optional<double> a_times_log_n;
  std::string table;

  void attach(CLI::App* app) {
    app->add_option("--spec", file, "spec JSON file");
    app->add_option("-n,--n", n, "population size");
    app->add_option("--k", k, "deterministic block size");
    app->add_option("--k-exponent", k_exponent, "deterministic block size floor(n^x)");
    app->add_option("--a", a, "two-point parameter a");
    app->add_option("--a-log-n", a_times_log_n, "two-point parameter given as a log n");
    app->add_option("--table", table, "pmf as k:p,k:p,...");
  }

  rba::BlockSizeSpec build() const {
    if (!file.empty()) {
      std::ifstream in(file);
      if (!in) throw rba::ConfigError("cannot read spec file '" + file + "'");
      rba::json j;
      try {
        in >> j;
      } catch (const rba::json::exception& e) {
        throw rba::ConfigError(std::string("spec file is not valid JSON: ") + e.what());
      }
      return rba::spec_from_json(j);
    }
    if (n < 2) throw rba::ConfigError("give --spec FILE, or --n with one of --k, --k-exponent, --a, --a-log-n, --table");
    rba::json j{{"n", n}};
    if (k) {
      j["kind"] = "deterministic";
      j["parameters"] = {{"k", *k}};
    } else if (k_exponent) {
      j["kind"] = "deterministic";
      j["parameters"] = {{"k_exponent", *k_exponent}};
    } else if (a) {
      j["kind"] = "two_point";
      j["parameters"] = {{"a", *a}};
    } else if (a_times_log_n) {
      j["kind"] = "two_point";
      j["parameters"] = {{"a_times_log_n", *a_times_log_n}};
    } else if (!table.empty()) {
      rba::json rows = rba::json::array();
      std::stringstream ss(table);
      std::string item;
      while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw rba::ConfigError("--table entries look like k:p");
        try {
          rows.push_back({std::stoi(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
        } catch (const std::exception&) {
          throw rba::ConfigError("cannot parse --table entry '" + item + "'");
        }
      }
      j["kind"] = "table";
      j["parameters"] = {{"table", rows}};
    } else {
      throw rba::ConfigError("--n needs one of --k, --k-exponent, --a, --a-log-n, --table");
    }
    return rba::spec_from_json(j);
  }
};

int cmd_timescales(const SpecFlags& flags, const rba::RegimeThresholds& thresholds) {
  const auto spec = flags.build();
  rba::json out;
  out["spec"] = rba::spec_to_json(spec);
  out["timescales"] = rba::timescales_json(rba::timescales(spec));
  out["regime"] = rba::regime_json(rba::regime_classify(spec, thresholds));
  std::cout << out.dump(2) << '\n';
  return 0;
}

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> replicas;
  std::optional<unsigned> workers;

  void attach(CLI::App* app) {
    app->add_option("--seed", seed, "override the master seed");
    app->add_option("--replicas", replicas, "override the replica count");
    app->add_option("--workers", workers, "override the worker thread count");
  }

  rba::ExperimentConfig load(const std::string& path) const {
    auto doc = rba::load_config(path).source;
    if (seed) doc["seed"] = *seed;
    if (replicas) doc["replicas"] = *replicas;
    if (workers) doc["workers"] = *workers;
    return rba::config_from_json(doc);
  }
};

int cmd_simulate(const std::string& path, const RunOverrides& ov) {
  const auto cfg = ov.load(path);
  std::vector<rba::ReplicaResult> replicas;
  const auto agg = rba::run_experiment(cfg, cfg.output.trajectories.empty() ? nullptr : &replicas);
  rba::write_outputs(cfg, agg, replicas);
  if (cfg.output.aggregate.empty()) rba::write_aggregate_csv(std::cout, agg);
  if (agg.truncated) {
    std::cerr << "rba: " << agg.truncated_replicas << " replica(s) stopped short of the schedule"
              << " (budget or t_max); results are partial\n";
    return kExitResource;
  }
  return 0;
}

int cmd_tmix(const std::string& path, const RunOverrides& ov, double eps) {
  const auto cfg = ov.load(path);
  const auto agg = rba::run_experiment(cfg);
  std::vector<rba::ReplicaResult> none;
  rba::write_outputs(cfg, agg, none);
  const auto est = rba::estimate_tmix(agg, eps);
  const auto ts = rba::timescales(cfg.spec);
  rba::json out{{"eps", eps},
                {"found", est.found},
                {"t_mix", est.found ? rba::json(est.t) : rba::json(nullptr)},
                {"bracket", {est.bracket_lo, est.t}},
                {"mean_d_tv", est.mean},
                {"stderr", est.std_error},
                {"confident", est.confident},
                {"t_mix_over_t_ent", est.found ? rba::json(est.t / ts.t_ent) : rba::json(nullptr)},
                {"report", est.report},
                {"replicas", agg.replicas},
                {"truncated", agg.truncated}};
  std::cout << out.dump(2) << '\n';
  return agg.truncated ? kExitResource : 0;
}

int cmd_profile(const std::string& kind, std::optional<double> parameter, double lo, double hi, double step,
                bool tau_relative, const std::string& out_path) {
  rba::ProfileCurve curve;
  curve.kind = rba::profile_kind_from_string(kind);
  curve.tau_relative = tau_relative;
  if (parameter) {
    curve.parameter = *parameter;
  } else if (curve.kind == rba::ProfileKind::poisson_noncutoff || curve.kind == rba::ProfileKind::half_cutoff) {
    throw rba::ConfigError("--param is required for " + kind);
  }
  const auto pts = curve.evaluate(lo, hi, step);
  if (out_path.empty()) {
    rba::write_profile_csv(std::cout, pts);
  } else {
    auto os = rba::open_output(out_path);
    rba::write_profile_csv(os, pts);
  }
  return 0;
}

int cmd_validate(const std::vector<std::string>& suites, std::uint64_t seed, const std::string& out_path) {
  std::vector<std::string> names = suites;
  if (names.empty() || (names.size() == 1 && names[0] == "all")) names = rba::validation_suites();
  rba::json report = rba::json::array();
  bool ok = true;
  for (const auto& s : names) {
    const auto r = rba::run_validation(s, seed);
    ok = ok && r.pass();
    report.push_back(r.to_json());
    std::cerr << (r.pass() ? "PASS " : "FAIL ") << s << '\n';
  }
  if (out_path.empty()) {
    std::cout << report.dump(2) << '\n';
  } else {
    auto os = rba::open_output(out_path);
    os << report.dump(2) << '\n';
  }
  return ok ? 0 : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Repeated block average simulator and toolkit"};
  app.require_subcommand(1);

  SpecFlags spec_flags;
  rba::RegimeThresholds thresholds;
  auto* ts = app.add_subcommand("timescales", "print timescales and regime diagnostics of a block-size law");
  spec_flags.attach(ts);
  ts->add_option("--mu-threshold", thresholds.mu_over_log_n, "cut point for mu / log n");
  ts->add_option("--sigma-threshold", thresholds.sigma2_over_mu_log_n, "cut point for sigma^2 / (mu log n)");
  ts->add_option("--lindeberg-threshold", thresholds.lindeberg, "cut point for the Lindeberg statistic");
  ts->add_option("--lindeberg-delta", thresholds.lindeberg_delta, "delta in the Lindeberg statistic");

  std::string config_path;
  RunOverrides overrides;
  auto* sim = app.add_subcommand("simulate", "run a replicated experiment from a config file");
  sim->add_option("config", config_path, "experiment config (JSON)")->required();
  overrides.attach(sim);

  double eps = 0.25;
  auto* tm = app.add_subcommand("tmix", "estimate t_mix(eps) on the config's schedule");
  tm->add_option("config", config_path, "experiment config (JSON)")->required();
  tm->add_option("--eps", eps, "accuracy level in (0, 1)");
  overrides.attach(tm);

  std::string kind = "gaussian_cutoff";
  std::optional<double> parameter;
  double lo = -3.0, hi = 3.0, step = 0.1;
  bool tau_relative = false;
  std::string out_path;
  auto* pr = app.add_subcommand("profile", "emit a limit profile as CSV beta,value");
  pr->add_option("--kind", kind, "gaussian_cutoff | poisson_noncutoff | metastable_exp | half_cutoff");
  pr->add_option("--param", parameter, "rho, delta or c");
  pr->add_option("--from", lo, "grid start");
  pr->add_option("--to", hi, "grid end");
  pr->add_option("--step", step, "grid step");
  pr->add_flag("--tau-relative", tau_relative, "poisson curve relative to tau_start (upper bound)");
  pr->add_option("-o,--out", out_path, "output file (default stdout)");

  std::vector<std::string> suites;
  std::uint64_t seed = 1;
  auto* va = app.add_subcommand("validate", "run self-check suites");
  va->add_option("suites", suites, "suite names or 'all'");
  va->add_option("--seed", seed, "seed for Monte Carlo suites");
  va->add_option("-o,--out", out_path, "report file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*ts) return cmd_timescales(spec_flags, thresholds);
    if (*sim) return cmd_simulate(config_path, overrides);
    if (*tm) return cmd_tmix(config_path, overrides, eps);
    if (*pr) return cmd_profile(kind, parameter, lo, hi, step, tau_relative, out_path);
    if (*va) return cmd_validate(suites, seed, out_path);
  } catch (const rba::ConfigError& e) {
    std::cerr << "rba: configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const rba::DomainError& e) {
    std::cerr << "rba: " << e.what() << '\n';
    return kExitConfig;
  } catch (const rba::ResourceCapError& e) {
    std::cerr << "rba: resource cap: " << e.what() << '\n';
    return kExitResource;
  }
  return 0;
}
