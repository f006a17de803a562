#pragma once

// Replicated experiments: parallel replicas, order-insensitive aggregation,
// mixing-time estimates, CSV and manifest output.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rba/config.hpp"
#include "rba/engine.hpp"
#include "rba/errors.hpp"
#include "rba/io.hpp"
#include "rba/piles.hpp"
#include "rba/profiles.hpp"
#include "rba/size_spec.hpp"

namespace rba {

inline constexpr const char* kVersion = "0.1.0";

/// Values one replica recorded at one schedule point.
struct PointValues {
  std::uint64_t t = 0;  // absolute step
  double d_tv = 0.0;
  double entropy = 0.0;
  double l2_sq = 0.0;
  double w = std::numeric_limits<double>::quiet_NaN();    // ledger mode only
  double glb = std::numeric_limits<double>::quiet_NaN();  // ledger mode only
};

struct ReplicaResult {
  std::uint64_t replica = 0;
  TrajectoryRecord record;
  std::vector<std::optional<PointValues>> points;  // indexed like the schedule
  std::uint64_t glb_violations = 0;
  double max_ledger_gap = 0.0;
  std::vector<GenerationRow> generations;
};

struct SummaryStats {
  std::uint64_t count = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();
  double q10 = std::numeric_limits<double>::quiet_NaN();
  double q50 = std::numeric_limits<double>::quiet_NaN();
  double q90 = std::numeric_limits<double>::quiet_NaN();
};

/// Linear-interpolation quantile of sorted data.
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Mean, standard error (sample sd / sqrt(count)) and 10/50/90% quantiles.
/// Values are summed in the order given.
inline SummaryStats summarize(const std::vector<double>& values) {
  SummaryStats s;
  s.count = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std_error = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1) /
                                               static_cast<double>(values.size()))
                                  : 0.0;
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  s.q10 = sorted_quantile(sorted, 0.1);
  s.q50 = sorted_quantile(sorted, 0.5);
  s.q90 = sorted_quantile(sorted, 0.9);
  return s;
}

struct AggregatePoint {
  double x = 0.0;
  std::uint64_t t = 0;  // offset from tau_start in tau-relative schedules
  SummaryStats d_tv;
  SummaryStats entropy;
  SummaryStats l2_sq;
  SummaryStats w;
  SummaryStats glb;
  std::optional<double> reference;
  std::uint64_t missing = 0;  // replicas that never reached this point
};

struct AggregateResult {
  std::vector<AggregatePoint> points;
  std::uint64_t replicas = 0;
  bool tau_relative = false;
  bool ledger = false;
  bool truncated = false;  // some replica stopped short of its schedule
  std::uint64_t truncated_replicas = 0;
  std::uint64_t aborted_replicas = 0;
  std::uint64_t glb_violations = 0;
  double max_ledger_gap = 0.0;
  SummaryStats tau_start;
  std::vector<MeetingEstimate> meeting;
  std::vector<GenerationRow> generations;
  double wall_seconds = 0.0;
};

/// Replica results keyed by replica id. Merging is a union, so batches may
/// be combined in any order; finalize() always reduces in replica order and
/// is therefore bit-identical across merge orders.
class ReplicaBatch {
 public:
  void add(ReplicaResult r) {
    const auto id = r.replica;
    if (!results_.emplace(id, std::move(r)).second)
      throw PreconditionError("replica " + std::to_string(id) + " added twice");
  }

  void merge(ReplicaBatch other) {
    for (auto& [id, r] : other.results_) add(std::move(r));
  }

  std::size_t size() const { return results_.size(); }
  const std::map<std::uint64_t, ReplicaResult>& results() const { return results_; }

  AggregateResult finalize(const std::vector<SchedulePoint>& schedule, bool tau_relative, bool ledger,
                           const std::optional<ProfileCurve>& reference) const {
    AggregateResult out;
    out.replicas = results_.size();
    out.tau_relative = tau_relative;
    out.ledger = ledger;
    std::vector<double> taus;
    for (const auto& [id, r] : results_) {
      if (r.record.truncated_points > 0 || r.record.aborted) ++out.truncated_replicas;
      if (r.record.aborted) ++out.aborted_replicas;
      out.glb_violations += r.glb_violations;
      out.max_ledger_gap = std::max(out.max_ledger_gap, r.max_ledger_gap);
      if (r.record.tau_start) taus.push_back(static_cast<double>(*r.record.tau_start));
    }
    out.truncated = out.truncated_replicas > 0;
    out.tau_start = summarize(taus);
    for (std::size_t i = 0; i < schedule.size(); ++i) {
      AggregatePoint p;
      p.x = schedule[i].x;
      p.t = schedule[i].t;
      std::vector<double> dtv, ent, l2, w, glb;
      for (const auto& [id, r] : results_) {
        if (i >= r.points.size() || !r.points[i]) {
          ++p.missing;
          continue;
        }
        const auto& v = *r.points[i];
        dtv.push_back(v.d_tv);
        ent.push_back(v.entropy);
        l2.push_back(v.l2_sq);
        if (ledger) {
          w.push_back(v.w);
          glb.push_back(v.glb);
        }
      }
      p.d_tv = summarize(dtv);
      p.entropy = summarize(ent);
      p.l2_sq = summarize(l2);
      p.w = summarize(w);
      p.glb = summarize(glb);
      if (reference) p.reference = (*reference)(p.x);
      out.points.push_back(p);
    }
    return out;
  }

 private:
  std::map<std::uint64_t, ReplicaResult> results_;
};

namespace detail {

class ReplicaObserver {
 public:
  ReplicaObserver(const ExperimentConfig& cfg, ReplicaResult& out, bool keep_generations,
                  std::chrono::steady_clock::time_point deadline, bool has_deadline)
      : cfg_(cfg), out_(out), keep_generations_(keep_generations), deadline_(deadline),
        has_deadline_(has_deadline) {
    if (!cfg.ledger.enabled) return;
    const auto n = static_cast<std::size_t>(cfg.spec.n());
    if (cfg.start == StartKind::dirac)
      ledger_.emplace(PileLedger::dirac(n, cfg.x0, cfg.ledger.floor));
    else
      ledger_.emplace(PileLedger::eta_start(n, cfg.start_k, cfg.x0, cfg.ledger.floor));
  }

  void on_step(std::uint64_t, const BlockSample& block, const MassDistribution&) {
    if (ledger_) ledger_->step(block);
  }

  void on_record(const TrajectoryEntry& e, const MassDistribution& eta) {
    if (!ledger_) return;
    LedgerSnapshot s;
    s.w = thresholded_mass(*ledger_, cfg_.ledger.a / static_cast<double>(cfg_.spec.n()));
    s.glb = glb_diagnostic(*ledger_, cfg_.ledger.a, cfg_.ledger.eps);
    if (s.glb > e.d_tv + 1e-9) ++out_.glb_violations;
    for (std::size_t x = 0; x < eta.size(); ++x)
      out_.max_ledger_gap = std::max(out_.max_ledger_gap, std::abs(ledger_->site_mass(x) - eta[x]));
    snapshots_[e.t] = s;
    if (keep_generations_) out_.generations.push_back({e.t, generation_histogram(*ledger_, cfg_.spec)});
  }

  bool should_stop(std::uint64_t) const {
    return has_deadline_ && std::chrono::steady_clock::now() >= deadline_;
  }

  struct LedgerSnapshot {
    double w = 0.0;
    double glb = 0.0;
  };
  const std::map<std::uint64_t, LedgerSnapshot>& snapshots() const { return snapshots_; }

 private:
  const ExperimentConfig& cfg_;
  ReplicaResult& out_;
  bool keep_generations_;
  std::chrono::steady_clock::time_point deadline_;
  bool has_deadline_;
  std::optional<PileLedger> ledger_;
  std::map<std::uint64_t, LedgerSnapshot> snapshots_;
};

// A safety horizon for waiting on tau_start: P(tau_start > 60 n / E[X]) < e^-60.
inline std::uint64_t tau_start_allowance(const BlockSizeSpec& spec) {
  return static_cast<std::uint64_t>(std::ceil(60.0 * spec.n() / spec.mean()));
}

}  // namespace detail

/// Whether recording times shift by each replica's own tau_start. An
/// eta_start start already is the state at tau_start, so its offsets are
/// absolute.
inline bool shifts_by_tau_start(const ExperimentConfig& cfg) {
  return cfg.schedule.tau_relative() && cfg.start == StartKind::dirac;
}

inline TrajectoryOptions trajectory_options(const ExperimentConfig& cfg, const std::vector<SchedulePoint>& pts) {
  TrajectoryOptions opt;
  opt.x0 = cfg.x0;
  opt.start = cfg.start;
  opt.start_k = cfg.start_k;
  std::vector<std::uint64_t> times;
  for (const auto& p : pts) times.push_back(p.t);
  const std::uint64_t last = times.empty() ? 0 : *std::max_element(times.begin(), times.end());
  if (shifts_by_tau_start(cfg)) {
    opt.schedule = RecordSchedule::after_tau_start(times);
    opt.t_max = cfg.t_max.value_or(last + detail::tau_start_allowance(cfg.spec));
  } else {
    opt.schedule = RecordSchedule::at(times);
    opt.t_max = cfg.t_max.value_or(last);
  }
  opt.t_max = std::min(opt.t_max, cfg.budget.max_steps);
  return opt;
}

inline std::optional<ProfileCurve> reference_curve(const ExperimentConfig& cfg) {
  if (!cfg.reference.enabled) return std::nullopt;
  ProfileCurve c;
  c.kind = cfg.reference.kind;
  c.tau_relative = cfg.schedule.tau_relative();
  if (cfg.reference.parameter)
    c.parameter = *cfg.reference.parameter;
  else if (c.kind == ProfileKind::gaussian_cutoff)
    c.parameter = timescales(cfg.spec).rho;
  return c;
}

/// Refuses ledger configs whose worst-case bucket count exceeds the budget.
inline void check_ledger_budget(const ExperimentConfig& cfg) {
  if (!cfg.ledger.enabled) return;
  const auto n = static_cast<std::uint64_t>(cfg.spec.n());
  const double floor = cfg.ledger.floor > 0.0 ? cfg.ledger.floor : PileLedger::default_floor(n);
  const std::uint64_t per_site_cap = std::max<std::uint64_t>(1, cfg.budget.max_buckets / n);
  const std::uint64_t keys = predicted_bucket_keys(cfg.spec, floor, per_site_cap);
  if (keys > per_site_cap || keys * n > cfg.budget.max_buckets)
    throw ResourceCapError("ledger mode could need " + std::to_string(keys) + " size classes on each of " +
                           std::to_string(n) + " sites, above budget.max_buckets = " +
                           std::to_string(cfg.budget.max_buckets));
}

inline ReplicaResult run_replica(const ExperimentConfig& cfg, const std::vector<SchedulePoint>& pts,
                                 std::uint64_t replica,
                                 std::chrono::steady_clock::time_point deadline = {}, bool has_deadline = false) {
  ReplicaResult out;
  out.replica = replica;
  const TrajectoryOptions opt = trajectory_options(cfg, pts);
  const bool keep_generations = cfg.ledger.enabled && cfg.ledger.generations && replica == 0;
  detail::ReplicaObserver obs(cfg, out, keep_generations, deadline, has_deadline);
  out.record = run_trajectory(cfg.spec, opt, cfg.seed, replica, obs);

  const bool shifted = shifts_by_tau_start(cfg);
  const auto& entries = out.record.entries;
  out.points.resize(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::uint64_t target = pts[i].t;
    if (shifted) {
      if (!out.record.tau_start) continue;
      target += *out.record.tau_start;
    }
    const auto it = std::lower_bound(entries.begin(), entries.end(), target,
                                     [](const TrajectoryEntry& e, std::uint64_t t) { return e.t < t; });
    if (it == entries.end() || it->t != target) continue;
    PointValues v{it->t, it->d_tv, it->entropy, it->l2_sq};
    if (cfg.ledger.enabled) {
      const auto s = obs.snapshots().at(it->t);
      v.w = s.w;
      v.glb = s.glb;
    }
    out.points[i] = v;
  }
  return out;
}

/// Runs all replicas on up to cfg.workers threads. Results depend only on
/// (config, seed), never on scheduling.
inline AggregateResult run_experiment(const ExperimentConfig& cfg, std::vector<ReplicaResult>* keep = nullptr) {
  const auto wall_start = std::chrono::steady_clock::now();
  check_ledger_budget(cfg);
  const auto pts = cfg.schedule.resolve(cfg.spec);
  auto reference = reference_curve(cfg);
  if (reference) {
    try {
      for (const auto& p : pts) (void)(*reference)(p.x);
    } catch (const DomainError& e) {
      throw ConfigError(std::string("reference curve: ") + e.what());
    }
  }

  const bool has_deadline = cfg.budget.max_seconds > 0.0;
  const auto deadline =
      wall_start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                       std::chrono::duration<double>(cfg.budget.max_seconds));

  std::vector<ReplicaResult> results(cfg.replicas);
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::uint64_t r = next.fetch_add(1);
      if (r >= cfg.replicas) return;
      try {
        results[r] = run_replica(cfg, pts, r, deadline, has_deadline);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = cfg.replicas;
        return;
      }
    }
  };
  const auto n_threads = static_cast<unsigned>(std::min<std::uint64_t>(cfg.workers, cfg.replicas));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (unsigned i = 0; i < n_threads; ++i) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  ReplicaBatch batch;
  std::vector<GenerationRow> generations;
  for (auto& r : results) {
    if (r.replica == 0) generations = r.generations;
    if (keep) keep->push_back(r);
    batch.add(std::move(r));
  }
  AggregateResult agg = batch.finalize(pts, cfg.schedule.tau_relative(), cfg.ledger.enabled, reference);
  agg.generations = std::move(generations);
  if (cfg.probes.enabled)
    for (std::uint64_t t : cfg.probes.times)
      for (double theta : cfg.probes.thetas)
        agg.meeting.push_back(meeting_probe(cfg.spec, t, theta, cfg.probes.pairs, cfg.seed));
  agg.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return agg;
}

struct TmixEstimate {
  bool found = false;
  double eps = 0.0;
  std::uint64_t t = 0;         // first scheduled time with mean d_TV < eps
  std::uint64_t bracket_lo = 0;  // previous scheduled time (the crossing lies in (lo, t])
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();
  /// Both sides of the bracket are at least 3 standard errors from eps.
  bool confident = false;
  std::string report;
};

/// inf{t in schedule : mean d_TV(t) < eps}. Without a crossing this returns
/// found = false and a report, not an error.
inline TmixEstimate estimate_tmix(const AggregateResult& agg, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("eps must lie in (0, 1)");
  TmixEstimate est;
  est.eps = eps;
  for (std::size_t i = 1; i < agg.points.size(); ++i)
    if (agg.points[i].t < agg.points[i - 1].t) throw PreconditionError("t_mix needs a monotone schedule");
  for (std::size_t i = 0; i < agg.points.size(); ++i) {
    const auto& p = agg.points[i];
    if (p.d_tv.count == 0 || !(p.d_tv.mean < eps)) continue;
    est.found = true;
    est.t = p.t;
    est.mean = p.d_tv.mean;
    est.std_error = p.d_tv.std_error;
    bool prev_ok = true;
    if (i > 0) {
      const auto& q = agg.points[i - 1];
      est.bracket_lo = q.t;
      prev_ok = q.d_tv.mean - 3.0 * q.d_tv.std_error >= eps;
    }
    est.confident = prev_ok && p.d_tv.mean + 3.0 * p.d_tv.std_error < eps;
    est.report = "crossing in (" + std::to_string(est.bracket_lo) + ", " + std::to_string(est.t) + "]";
    return est;
  }
  est.report = "no crossing: mean d_TV stays >= " + fmt(eps) + " on the whole schedule";
  if (!agg.points.empty() && agg.points.back().d_tv.count > 0) {
    est.t = agg.points.back().t;
    est.mean = agg.points.back().d_tv.mean;
    est.std_error = agg.points.back().d_tv.std_error;
  }
  return est;
}

inline void write_aggregate_csv(std::ostream& os, const AggregateResult& agg) {
  os << "x,t,replicas,d_tv_mean,d_tv_stderr,d_tv_q10,d_tv_q50,d_tv_q90,entropy_mean,entropy_stderr,"
        "l2_sq_mean,l2_sq_stderr";
  if (agg.ledger) os << ",w_mean,w_stderr,glb_mean,glb_stderr";
  const bool has_ref = !agg.points.empty() && agg.points.front().reference.has_value();
  if (has_ref) os << ",reference";
  os << ",missing\n";
  for (const auto& p : agg.points) {
    os << fmt(p.x) << ',' << p.t << ',' << p.d_tv.count << ',' << fmt(p.d_tv.mean) << ','
       << fmt(p.d_tv.std_error) << ',' << fmt(p.d_tv.q10) << ',' << fmt(p.d_tv.q50) << ',' << fmt(p.d_tv.q90)
       << ',' << fmt(p.entropy.mean) << ',' << fmt(p.entropy.std_error) << ',' << fmt(p.l2_sq.mean) << ','
       << fmt(p.l2_sq.std_error);
    if (agg.ledger)
      os << ',' << fmt(p.w.mean) << ',' << fmt(p.w.std_error) << ',' << fmt(p.glb.mean) << ','
         << fmt(p.glb.std_error);
    if (has_ref) os << ',' << fmt(*p.reference);
    os << ',' << p.missing << '\n';
  }
}

inline json timescales_json(const TimescaleSet& ts) {
  return {{"n", ts.n}, {"mean_block", ts.mean_block}, {"mu", ts.mu},   {"sigma2", ts.sigma2},
          {"t_rel", ts.t_rel}, {"t_ent", ts.t_ent}, {"t_w", ts.t_w}, {"rho", ts.rho}};
}

inline json regime_json(const RegimeDiagnostics& d) {
  return {{"mu_over_log_n", d.mu_over_log_n},
          {"sigma2_over_mu_log_n", d.sigma2_over_mu_log_n},
          {"lindeberg", d.lindeberg},
          {"label", to_string(d.label)}};
}

/// Run manifest. Everything except wall_seconds is a function of the config.
inline json run_manifest(const ExperimentConfig& cfg, const AggregateResult& agg) {
  json m;
  m["version"] = kVersion;
#ifdef __VERSION__
  m["compiler"] = __VERSION__;
#endif
  m["config"] = cfg.source;
  m["seed"] = cfg.seed;
  m["spec"] = spec_to_json(cfg.spec);
  m["timescales"] = timescales_json(timescales(cfg.spec));
  m["regime"] = regime_json(regime_classify(cfg.spec, cfg.regime));
  m["replicas"] = agg.replicas;
  m["schedule_mode"] = to_string(cfg.schedule.mode);
  m["tau_relative"] = agg.tau_relative;
  m["truncated"] = agg.truncated;
  m["truncated_replicas"] = agg.truncated_replicas;
  m["aborted_replicas"] = agg.aborted_replicas;
  if (agg.tau_start.count > 0) m["tau_start_mean"] = agg.tau_start.mean;
  if (agg.ledger) {
    m["glb_violations"] = agg.glb_violations;
    m["max_ledger_gap"] = agg.max_ledger_gap;
  }
  double worst_se = 0.0;
  for (const auto& p : agg.points)
    if (p.d_tv.count > 0) worst_se = std::max(worst_se, p.d_tv.std_error);
  m["max_d_tv_stderr"] = worst_se;
  m["wall_seconds"] = agg.wall_seconds;
  return m;
}

/// Writes every output the config names.
inline void write_outputs(const ExperimentConfig& cfg, const AggregateResult& agg,
                          const std::vector<ReplicaResult>& replicas) {
  if (!cfg.output.aggregate.empty()) {
    auto os = open_output(cfg.output.aggregate);
    write_aggregate_csv(os, agg);
  }
  if (!cfg.output.manifest.empty()) {
    auto os = open_output(cfg.output.manifest);
    os << run_manifest(cfg, agg).dump(2) << '\n';
  }
  if (!cfg.output.generations.empty()) {
    auto os = open_output(cfg.output.generations);
    write_generation_csv(os, agg.generations);
  }
  if (!cfg.output.meeting.empty()) {
    auto os = open_output(cfg.output.meeting);
    write_meeting_csv(os, agg.meeting);
  }
  if (!cfg.output.trajectories.empty()) {
    std::filesystem::create_directories(cfg.output.trajectories);
    for (const auto& r : replicas) {
      const auto base = std::filesystem::path(cfg.output.trajectories) / ("replica_" + std::to_string(r.replica));
      auto csv = open_output(base.string() + ".csv");
      write_trajectory_csv(csv, r.record);
      auto side = open_output(base.string() + ".json");
      side << trajectory_sidecar(r.record, cfg.spec).dump(2) << '\n';
    }
  }
}

}  // namespace rba
