#pragma once

// Mass dynamics: repeated block averages on the n-simplex.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rba/errors.hpp"
#include "rba/rng.hpp"
#include "rba/size_spec.hpp"

namespace rba {

using Site = std::uint32_t;

/// Probability vector over the sites {0, ..., n-1}.
class MassDistribution {
 public:
  static constexpr double kSumTolerance = 1e-9;

  MassDistribution() = default;

  explicit MassDistribution(std::vector<double> masses) : masses_(std::move(masses)) {
    check_invariants(kSumTolerance);
  }

  static MassDistribution dirac(std::size_t n, std::size_t x0) {
    if (x0 >= n) throw DomainError("Dirac site outside [0, n)");
    std::vector<double> m(n, 0.0);
    m[x0] = 1.0;
    return MassDistribution(std::move(m));
  }

  static MassDistribution uniform(std::size_t n) {
    return MassDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  /// k sites of mass 1/k: x0, x0+1, ..., x0+k-1 (mod n).
  static MassDistribution eta_start(std::size_t n, std::size_t k, std::size_t x0 = 0) {
    if (k < 1 || k > n) throw DomainError("eta_start needs 1 <= k <= n");
    if (x0 >= n) throw DomainError("eta_start anchor outside [0, n)");
    std::vector<double> m(n, 0.0);
    for (std::size_t i = 0; i < k; ++i) m[(x0 + i) % n] = 1.0 / static_cast<double>(k);
    return MassDistribution(std::move(m));
  }

  std::size_t size() const { return masses_.size(); }
  double operator[](std::size_t x) const { return masses_[x]; }
  std::span<const double> masses() const { return masses_; }
  std::span<double> mutable_masses() { return masses_; }

  double total() const { return std::accumulate(masses_.begin(), masses_.end(), 0.0); }

  void renormalize() {
    const double s = total();
    for (double& m : masses_) m /= s;
  }

  void check_invariants(double tolerance) const {
    if (masses_.empty()) throw DomainError("mass distribution must have at least one site");
    for (double m : masses_)
      if (!(m >= 0.0) || !std::isfinite(m)) throw DomainError("masses must be finite and nonnegative");
    const double s = total();
    if (std::abs(s - 1.0) > tolerance)
      throw DomainError("masses sum to " + std::to_string(s) + ", not 1");
  }

 private:
  std::vector<double> masses_;
};

/// A block A_t: sorted distinct sites.
struct BlockSample {
  std::vector<Site> sites;

  std::size_t size() const { return sites.size(); }
  bool contains(Site x) const { return std::binary_search(sites.begin(), sites.end(), x); }
};

/// Uniform k-subsets of {0, ..., n-1}. Floyd's algorithm for k <= n/64,
/// partial Fisher-Yates on a persistent pool otherwise; both O(k) plus sort.
class SubsetSampler {
 public:
  explicit SubsetSampler(std::size_t n) : n_(n) {}

  void sample(std::size_t k, Philox4x32& rng, std::vector<Site>& out) {
    if (k > n_ || k == 0) throw DomainError("subset size outside [1, n]");
    out.clear();
    if (k <= n_ / 64) {
      floyd(k, rng, out);
    } else {
      shuffle_prefix(k, rng, out);
    }
    std::sort(out.begin(), out.end());
  }

 private:
  void floyd(std::size_t k, Philox4x32& rng, std::vector<Site>& out) {
    if (marks_.size() != n_) marks_.assign(n_, 0);
    for (std::size_t j = n_ - k; j < n_; ++j) {
      auto t = static_cast<Site>(rng.below(j + 1));
      if (marks_[t]) t = static_cast<Site>(j);
      marks_[t] = 1;
      out.push_back(t);
    }
    for (Site s : out) marks_[s] = 0;
  }

  void shuffle_prefix(std::size_t k, Philox4x32& rng, std::vector<Site>& out) {
    if (pool_.size() != n_) {
      pool_.resize(n_);
      std::iota(pool_.begin(), pool_.end(), Site{0});
    }
    // Any current pool order works: the prefix after k swaps is a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng.below(n_ - i);
      std::swap(pool_[i], pool_[j]);
      out.push_back(pool_[i]);
    }
  }

  std::size_t n_;
  std::vector<std::uint8_t> marks_;
  std::vector<Site> pool_;
};

/// The i.i.d. block sequence A_1, A_2, ... of one replica. Block sizes and
/// subset choices come from disjoint streams.
class BlockStream {
 public:
  BlockStream(const BlockSizeSpec& spec, std::uint64_t seed, std::uint64_t replica,
              StreamPurpose size_purpose = StreamPurpose::block_size,
              StreamPurpose subset_purpose = StreamPurpose::subset)
      : spec_(&spec),
        size_rng_(make_stream(seed, replica, size_purpose)),
        subset_rng_(make_stream(seed, replica, subset_purpose)),
        sampler_(static_cast<std::size_t>(spec.n())) {}

  const BlockSample& next() {
    const int k = spec_->sample(size_rng_);
    sampler_.sample(static_cast<std::size_t>(k), subset_rng_, current_.sites);
    return current_;
  }

  const BlockSample& current() const { return current_; }
  const BlockSizeSpec& spec() const { return *spec_; }

 private:
  const BlockSizeSpec* spec_;
  Philox4x32 size_rng_;
  Philox4x32 subset_rng_;
  SubsetSampler sampler_;
  BlockSample current_;
};

/// Replaces the masses on the block by their mean, in place.
inline void average_block_in_place(MassDistribution& eta, const BlockSample& block) {
  auto m = eta.mutable_masses();
  double sum = 0.0;
  for (Site x : block.sites) sum += m[x];
  const double mean = sum / static_cast<double>(block.size());
  for (Site x : block.sites) m[x] = mean;
}

inline MassDistribution average_block(const MassDistribution& eta, const BlockSample& block) {
  for (Site x : block.sites)
    if (x >= eta.size()) throw DomainError("block site outside [0, n)");
  MassDistribution out = eta;
  average_block_in_place(out, block);
  return out;
}

/// One step in place; returns the block used.
inline const BlockSample& step_in_place(MassDistribution& eta, BlockStream& blocks) {
  const BlockSample& block = blocks.next();
  average_block_in_place(eta, block);
  return block;
}

inline std::pair<MassDistribution, BlockSample> step(const MassDistribution& eta, BlockStream& blocks) {
  MassDistribution next = eta;
  const BlockSample& block = step_in_place(next, blocks);
  return {std::move(next), block};
}

/// (1/2) sum |eta(x) - 1/n|, evaluated as sum of positive parts.
inline double tv_distance(const MassDistribution& eta) {
  const double inv_n = 1.0 / static_cast<double>(eta.size());
  double acc = 0.0;
  for (double m : eta.masses())
    if (m > inv_n) acc += m - inv_n;
  return acc;
}

/// D(eta || uniform) = sum eta(x) log(n eta(x)), with 0 log 0 = 0.
inline double relative_entropy(const MassDistribution& eta) {
  const double n = static_cast<double>(eta.size());
  double acc = 0.0;
  for (double m : eta.masses())
    if (m > 0.0) acc += m * std::log(n * m);
  return std::max(acc, 0.0);
}

/// ||eta/pi - 1||_2^2 in L^2(pi) = n sum eta(x)^2 - 1.
inline double l2_sq(const MassDistribution& eta) {
  const double n = static_cast<double>(eta.size());
  double acc = 0.0;
  for (double m : eta.masses()) {
    const double d = n * m - 1.0;
    acc += d * d;
  }
  return acc / n;
}

inline double max_mass(const MassDistribution& eta) {
  return *std::max_element(eta.masses().begin(), eta.masses().end());
}

/// Recording times. Absolute schedules list steps t; tau-relative schedules
/// list offsets h, recorded at tau_start + h.
struct RecordSchedule {
  std::vector<std::uint64_t> times;
  bool tau_relative = false;

  static RecordSchedule at(std::vector<std::uint64_t> times) {
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    return {std::move(times), false};
  }

  static RecordSchedule grid(std::uint64_t start, std::uint64_t stop, std::uint64_t stride) {
    if (stride == 0) throw DomainError("grid stride must be positive");
    std::vector<std::uint64_t> t;
    for (std::uint64_t s = start; s <= stop; s += stride) t.push_back(s);
    return {std::move(t), false};
  }

  static RecordSchedule after_tau_start(std::vector<std::uint64_t> offsets) {
    auto s = at(std::move(offsets));
    s.tau_relative = true;
    return s;
  }
};

enum class StartKind { dirac, eta_start };

struct TrajectoryOptions {
  std::size_t x0 = 0;
  StartKind start = StartKind::dirac;
  std::size_t start_k = 0;  // number of mass-carrying sites for eta_start
  std::uint64_t t_max = 0;
  RecordSchedule schedule;
  std::uint64_t renormalize_every = std::uint64_t{1} << 16;
};

struct TrajectoryEntry {
  std::uint64_t t = 0;
  double d_tv = 0.0;
  double entropy = 0.0;
  double l2_sq = 0.0;
  double max_mass = 0.0;
};

struct TrajectoryRecord {
  std::vector<TrajectoryEntry> entries;
  /// First t >= 1 with x0 in A_t, if reached within the run.
  std::optional<std::uint64_t> tau_start;
  std::uint64_t seed = 0;
  std::uint64_t replica = 0;
  /// Scheduled points that fell beyond t_max and were dropped.
  std::size_t truncated_points = 0;
  std::uint64_t steps = 0;
  /// The observer asked to stop before the horizon.
  bool aborted = false;
};

inline TrajectoryEntry measure(std::uint64_t t, const MassDistribution& eta) {
  return {t, tv_distance(eta), relative_entropy(eta), l2_sq(eta), max_mass(eta)};
}

inline MassDistribution initial_state(std::size_t n, const TrajectoryOptions& opt) {
  if (opt.start == StartKind::dirac) return MassDistribution::dirac(n, opt.x0);
  return MassDistribution::eta_start(n, opt.start_k, opt.x0);
}

struct NullObserver {
  void on_step(std::uint64_t, const BlockSample&, const MassDistribution&) {}
  void on_record(const TrajectoryEntry&, const MassDistribution&) {}
};

/// Runs one replica. The observer sees every block (after averaging) and
/// every recorded entry, so co-driven structures (pile ledgers, chunk
/// marks) can follow the same block stream. An observer with
/// should_stop(t) is polled every 1024 steps.
template <class Observer = NullObserver>
TrajectoryRecord run_trajectory(const BlockSizeSpec& spec, const TrajectoryOptions& opt,
                                std::uint64_t seed, std::uint64_t replica, Observer&& observer = {}) {
  const auto n = static_cast<std::size_t>(spec.n());
  MassDistribution eta = initial_state(n, opt);
  BlockStream blocks(spec, seed, replica);
  TrajectoryRecord rec;
  rec.seed = seed;
  rec.replica = replica;

  const auto& sched = opt.schedule.times;
  std::size_t next = 0;
  std::uint64_t offset = 0;  // schedule shift; known once tau_start is
  bool schedule_live = !opt.schedule.tau_relative;

  auto record_due = [&](std::uint64_t t) {
    while (schedule_live && next < sched.size() && sched[next] + offset == t) {
      eta.check_invariants(MassDistribution::kSumTolerance);
      TrajectoryEntry e = measure(t, eta);
      observer.on_record(e, eta);
      rec.entries.push_back(e);
      ++next;
    }
  };

  auto horizon_reached = [&](std::uint64_t t) {
    if (!opt.schedule.tau_relative) return t >= opt.t_max;
    if (!schedule_live) return t >= opt.t_max;
    return next >= sched.size() || t >= opt.t_max;
  };

  record_due(0);
  std::uint64_t t = 0;
  while (!horizon_reached(t)) {
    if constexpr (requires { observer.should_stop(t); }) {
      if ((t & 1023) == 0 && t > 0 && observer.should_stop(t)) {
        rec.aborted = true;
        break;
      }
    }
    ++t;
    const BlockSample& block = step_in_place(eta, blocks);
    if (!rec.tau_start && block.contains(static_cast<Site>(opt.x0))) {
      rec.tau_start = t;
      if (opt.schedule.tau_relative) {
        offset = t;
        schedule_live = true;
      }
    }
    if (opt.renormalize_every != 0 && t % opt.renormalize_every == 0) {
      eta.check_invariants(MassDistribution::kSumTolerance);
      eta.renormalize();
    }
    observer.on_step(t, block, eta);
    record_due(t);
  }
  rec.steps = t;
  rec.truncated_points = sched.size() - next;
  return rec;
}

}  // namespace rba
