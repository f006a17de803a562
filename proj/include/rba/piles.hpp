#pragma once

// Pile dynamics and marked infinitesimal chunks.
//
// Every averaging event on a block of size k splits each pile sitting on the
// block into k equal fragments, one per block site. Two ledgers track this:
//
//   PileLedger         aggregate mode. Per site, a multiset of pile sizes as
//                      (quantized log-size, count) buckets plus a dust term
//                      for mass held in piles below the floor threshold.
//                      All block sites receive the same multiset after an
//                      event, so the bucket list is shared between them.
//   LiteralPileLedger  every pile is an object with an identity, fragments
//                      are placed by a uniform permutation of the block. For
//                      n <= 64 oracle work.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rba/engine.hpp"
#include "rba/errors.hpp"
#include "rba/rng.hpp"
#include "rba/size_spec.hpp"

namespace rba {

/// Quantum of the log-size keys: 2^-50, so key * quantum is exact and the
/// per-split rounding stays near double precision. Keys reach about
/// 8e17 at log-size -700, well inside int64.
inline constexpr double kLogQuantum = 0x1p-50;
/// Slack when comparing a pile's log-size against a threshold.
inline constexpr double kLogCompareSlack = 1e-9;

inline std::int64_t log_size_key(double log_size) { return std::llround(log_size / kLogQuantum); }
inline double key_log_size(std::int64_t key) { return static_cast<double>(key) * kLogQuantum; }
/// Key decrement for a split into k fragments.
inline std::int64_t split_key(int k) { return log_size_key(std::log(static_cast<double>(k))); }

struct PileBucket {
  std::int64_t key = 0;      // quantized log of the pile size (<= 0)
  std::uint64_t count = 0;   // number of piles of that size at the site

  double size() const { return std::exp(key_log_size(key)); }
  double mass() const { return static_cast<double>(count) * size(); }
};

class PileLedger {
 public:
  using BucketList = std::vector<PileBucket>;

  /// 1 / (n 2^20).
  static double default_floor(std::size_t n) { return 1.0 / (static_cast<double>(n) * 1048576.0); }

  static PileLedger dirac(std::size_t n, std::size_t x0, double floor_threshold = 0.0) {
    PileLedger l(n, floor_threshold);
    if (x0 >= n) throw DomainError("Dirac site outside [0, n)");
    l.sites_[x0] = std::make_shared<const BucketList>(BucketList{{0, 1}});
    return l;
  }

  /// k piles of size 1/k on x0, ..., x0+k-1 (mod n).
  static PileLedger eta_start(std::size_t n, std::size_t k, std::size_t x0 = 0,
                              double floor_threshold = 0.0) {
    PileLedger l(n, floor_threshold);
    if (k < 1 || k > n) throw DomainError("eta_start needs 1 <= k <= n");
    auto list = std::make_shared<const BucketList>(BucketList{{-split_key(static_cast<int>(k)), 1}});
    for (std::size_t i = 0; i < k; ++i) l.sites_[(x0 + i) % n] = list;
    return l;
  }

  std::size_t n() const { return sites_.size(); }
  double floor_threshold() const { return floor_; }
  double dust(std::size_t x) const { return dust_[x]; }

  std::span<const PileBucket> piles_at(std::size_t x) const {
    if (!sites_[x]) return {};
    return *sites_[x];
  }

  double site_mass(std::size_t x) const {
    double m = dust_[x];
    for (const auto& b : piles_at(x)) m += b.mass();
    return m;
  }

  double total_mass() const {
    double m = 0.0;
    for (std::size_t x = 0; x < n(); ++x) m += site_mass(x);
    return m;
  }

  double total_dust() const {
    double m = 0.0;
    for (double d : dust_) m += d;
    return m;
  }

  /// f(site, log_size, mass) for every bucket.
  template <class F>
  void for_each_pile(F&& f) const {
    for (std::size_t x = 0; x < n(); ++x)
      for (const auto& b : piles_at(x)) f(static_cast<Site>(x), key_log_size(b.key), b.mass());
  }

  /// Total bucket entries over all sites (shared lists counted per site).
  std::size_t bucket_count() const {
    std::size_t c = 0;
    for (const auto& s : sites_)
      if (s) c += s->size();
    return c;
  }

  void step(const BlockSample& block) {
    const auto k = static_cast<int>(block.size());
    merged_.clear();
    double dust_sum = 0.0;
    for (Site x : block.sites) {
      dust_sum += dust_[x];
      if (const BucketList* list = sites_[x].get()) merged_.insert(merged_.end(), list->begin(), list->end());
    }
    if (merged_.empty() && dust_sum == 0.0) return;
    std::sort(merged_.begin(), merged_.end(),
              [](const PileBucket& a, const PileBucket& b) { return a.key > b.key; });

    const std::int64_t dk = split_key(k);
    BucketList next;
    double dropped = 0.0;
    for (std::size_t i = 0; i < merged_.size();) {
      const std::int64_t key = merged_[i].key;
      std::uint64_t count = 0;
      for (; i < merged_.size() && merged_[i].key == key; ++i) count += merged_[i].count;
      const std::int64_t nk = key - dk;
      if (key_log_size(nk) < log_floor_) {
        dropped += static_cast<double>(count) * std::exp(key_log_size(nk));
      } else {
        next.push_back({nk, count});
      }
    }
    const double new_dust = dust_sum / k + dropped;
    std::shared_ptr<const BucketList> shared;
    if (!next.empty()) shared = std::make_shared<const BucketList>(std::move(next));
    for (Site x : block.sites) {
      sites_[x] = shared;
      dust_[x] = new_dust;
    }
  }

 private:
  PileLedger(std::size_t n, double floor_threshold)
      : floor_(floor_threshold > 0.0 ? floor_threshold : default_floor(n)),
        log_floor_(std::log(floor_)),
        sites_(n),
        dust_(n, 0.0) {
    if (n < 2) throw DomainError("ledger needs n >= 2");
    if (floor_ >= 1.0) throw DomainError("floor threshold must be below 1");
  }

  double floor_;
  double log_floor_;
  std::vector<std::shared_ptr<const BucketList>> sites_;
  std::vector<double> dust_;
  BucketList merged_;
};

inline void ledger_step(PileLedger& ledger, const BlockSample& block) { ledger.step(block); }

/// Distinct log-size keys at or above the floor reachable under spec, capped
/// at cap + 1. Worst-case aggregate memory is n times this.
inline std::size_t predicted_bucket_keys(const BlockSizeSpec& spec, double floor_threshold,
                                         std::size_t cap) {
  const double log_floor = std::log(floor_threshold);
  std::vector<std::int64_t> steps;
  for (int k : spec.support()) steps.push_back(split_key(k));
  std::set<std::int64_t> seen{0};
  std::vector<std::int64_t> frontier{0};
  while (!frontier.empty()) {
    const std::int64_t key = frontier.back();
    frontier.pop_back();
    for (std::int64_t d : steps) {
      const std::int64_t nk = key - d;
      if (key_log_size(nk) < log_floor) continue;
      if (seen.insert(nk).second) {
        if (seen.size() > cap) return cap + 1;
        frontier.push_back(nk);
      }
    }
  }
  return seen.size();
}

// ---------------------------------------------------------------------------
// Literal mode

struct LiteralPile {
  std::uint64_t id = 0;
  Site site = 0;
  double size = 0.0;
};

/// A chunk inside the literal ledger: the identity of its pile and its site.
struct LiteralMark {
  std::uint64_t pile = 0;
  Site site = 0;
};

class LiteralPileLedger {
 public:
  static constexpr std::size_t kMaxSites = 64;

  LiteralPileLedger(std::size_t n, std::size_t x0, std::size_t max_piles = std::size_t{1} << 20)
      : n_(n), max_piles_(max_piles) {
    if (n < 2 || n > kMaxSites) throw DomainError("literal ledger supports 2 <= n <= 64");
    if (x0 >= n) throw DomainError("Dirac site outside [0, n)");
    piles_.push_back({next_id_++, static_cast<Site>(x0), 1.0});
  }

  std::size_t n() const { return n_; }
  double floor_threshold() const { return 0.0; }
  double dust(std::size_t) const { return 0.0; }
  const std::vector<LiteralPile>& piles() const { return piles_; }

  /// A mark on the pile created at construction.
  LiteralMark origin_mark() const { return {piles_.front().id, piles_.front().site}; }

  double site_mass(std::size_t x) const {
    double m = 0.0;
    for (const auto& p : piles_)
      if (p.site == x) m += p.size;
    return m;
  }

  double total_mass() const {
    double m = 0.0;
    for (const auto& p : piles_) m += p.size;
    return m;
  }

  template <class F>
  void for_each_pile(F&& f) const {
    for (const auto& p : piles_) f(p.site, std::log(p.size), p.size);
  }

  /// Splits every pile on the block; each pile's k fragments go to the block
  /// sites through an independent uniform permutation. Marks on a split pile
  /// pick a fragment uniformly and independently of each other.
  void step(const BlockSample& block, Philox4x32& rng, std::span<LiteralMark> marks = {}) {
    const std::size_t k = block.size();
    std::vector<LiteralPile> next;
    next.reserve(piles_.size());
    std::vector<Site> perm;
    for (const auto& p : piles_) {
      if (!block.contains(p.site)) {
        next.push_back(p);
        continue;
      }
      perm.assign(block.sites.begin(), block.sites.end());
      for (std::size_t i = k; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
      const std::uint64_t base = next_id_;
      next_id_ += k;
      for (std::size_t f = 0; f < k; ++f) next.push_back({base + f, perm[f], p.size / static_cast<double>(k)});
      for (auto& m : marks) {
        if (m.pile != p.id) continue;
        const std::size_t f = rng.below(k);
        m.pile = base + f;
        m.site = perm[f];
      }
    }
    if (next.size() > max_piles_)
      throw ResourceCapError("literal ledger exceeded " + std::to_string(max_piles_) + " piles");
    piles_ = std::move(next);
  }

  double pile_size(std::uint64_t id) const {
    for (const auto& p : piles_)
      if (p.id == id) return p.size;
    throw PreconditionError("unknown pile id");
  }

 private:
  std::size_t n_;
  std::size_t max_piles_;
  std::uint64_t next_id_ = 0;
  std::vector<LiteralPile> piles_;
};

// ---------------------------------------------------------------------------
// Marked chunks

struct ChunkMark {
  Site site = 0;
  double log_size = 0.0;     // log of the marked pile's size
  std::uint64_t splits = 0;  // averaging events that hit the chunk
};

inline ChunkMark chunk_step(ChunkMark mark, const BlockSample& block, Philox4x32& rng) {
  if (!block.contains(mark.site)) return mark;
  const std::size_t k = block.size();
  mark.log_size -= std::log(static_cast<double>(k));
  ++mark.splits;
  mark.site = block.sites[rng.below(k)];
  return mark;
}

/// Two chunks that may still share a pile.
struct ChunkPair {
  ChunkMark u;
  ChunkMark v;
  bool same_pile = true;
};

inline ChunkPair chunk_pair_step(ChunkPair pair, const BlockSample& block, Philox4x32& rng) {
  const std::size_t k = block.size();
  if (pair.same_pile) {
    if (!block.contains(pair.u.site)) return pair;
    const double dl = std::log(static_cast<double>(k));
    pair.u.log_size -= dl;
    pair.v.log_size -= dl;
    ++pair.u.splits;
    ++pair.v.splits;
    const std::size_t fu = rng.below(k);
    const std::size_t fv = rng.below(k);
    // One permutation places the fragments: equal fragments share a site,
    // distinct fragments land on distinct uniform sites.
    const std::size_t i = rng.below(k);
    pair.u.site = block.sites[i];
    if (fu == fv) {
      pair.v.site = pair.u.site;
    } else {
      std::size_t j = rng.below(k - 1);
      if (j >= i) ++j;
      pair.v.site = block.sites[j];
      pair.same_pile = false;
    }
    return pair;
  }
  // Different piles are permuted independently.
  pair.u = chunk_step(pair.u, block, rng);
  pair.v = chunk_step(pair.v, block, rng);
  return pair;
}

/// Follows one fresh chunk from x0 along a recorded block sequence.
inline ChunkMark replay_chunk(std::span<const BlockSample> blocks, Site x0, Philox4x32& rng) {
  ChunkMark m{x0, 0.0, 0};
  for (const auto& b : blocks) m = chunk_step(m, b, rng);
  return m;
}

// ---------------------------------------------------------------------------
// Typical pile size without simulating the system

struct PileSizeSample {
  double log_size = 0.0;
  std::uint64_t splits = 0;  // T
};

/// log|zeta_t(U)| = -sum_{s<=T} log Y_s with T ~ Bin(t, E[X]/n), Y_s ~ p_Y.
class DirectPileSizeSampler {
 public:
  explicit DirectPileSizeSampler(const BlockSizeSpec& spec)
      : law_(spec),
        hit_(spec.mean() / spec.n()),
        deterministic_(spec.is_deterministic()),
        log_k_(spec.is_deterministic() ? std::log(static_cast<double>(spec.deterministic_size())) : 0.0) {}

  PileSizeSample sample(std::uint64_t t, Philox4x32& rng) const {
    PileSizeSample out;
    if (t == 0) return out;
    std::binomial_distribution<std::int64_t> bin(static_cast<std::int64_t>(t), hit_);
    out.splits = static_cast<std::uint64_t>(bin(rng));
    if (deterministic_) {
      out.log_size = -static_cast<double>(out.splits) * log_k_;
    } else {
      for (std::uint64_t s = 0; s < out.splits; ++s) out.log_size -= std::log(static_cast<double>(law_.sample(rng)));
    }
    return out;
  }

 private:
  SizeBiasedLaw law_;
  double hit_;
  bool deterministic_;
  double log_k_;
};

inline PileSizeSample sample_pile_size_direct(const BlockSizeSpec& spec, std::uint64_t t, Philox4x32& rng) {
  return DirectPileSizeSampler(spec).sample(t, rng);
}

// ---------------------------------------------------------------------------
// Diagnostics over either ledger

/// Mass held in piles of size >= threshold.
template <class Ledger>
double thresholded_mass(const Ledger& ledger, double threshold) {
  if (threshold < ledger.floor_threshold())
    throw PreconditionError("threshold " + std::to_string(threshold) + " is below the ledger floor " +
                            std::to_string(ledger.floor_threshold()) + "; dust there is unresolved");
  if (threshold <= 0.0) return 1.0;
  const double log_thr = std::log(threshold);
  double acc = 0.0;
  ledger.for_each_pile([&](Site, double log_size, double mass) {
    if (log_size >= log_thr - kLogCompareSlack) acc += mass;
  });
  return acc;
}

/// 1{|w_t| > 1 - eps} (1 - eps - 1/a), w_t the mass in piles of size >= a/n.
/// A lower bound on d_TV for the same realization.
template <class Ledger>
double glb_diagnostic(const Ledger& ledger, double a, double eps) {
  if (!(a > 1.0)) throw DomainError("glb_diagnostic needs a > 1");
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("glb_diagnostic needs eps in (0, 1)");
  const double w = thresholded_mass(ledger, a / static_cast<double>(ledger.n()));
  return w > 1.0 - eps ? 1.0 - eps - 1.0 / a : 0.0;
}

struct MeetingEstimate {
  std::uint64_t t = 0;
  double theta = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
  double bound = 0.0;  // theta + 1/n
  std::uint64_t pairs = 0;
};

/// P(e_t(U) = e_t(U'), |zeta_t(U)| < theta, |zeta_t(U')| < theta) by Monte
/// Carlo: each pair starts in the pile at site 0 and follows its own block
/// stream. Pair i uses stream id i under seed.
inline MeetingEstimate meeting_probe(const BlockSizeSpec& spec, std::uint64_t t, double theta,
                                     std::uint64_t n_pairs, std::uint64_t seed) {
  if (n_pairs < 1) throw PreconditionError("meeting_probe needs at least one pair");
  if (!(theta > 0.0)) throw DomainError("theta must be positive");
  const double log_theta = std::log(theta);
  std::uint64_t hits = 0;
  for (std::uint64_t i = 0; i < n_pairs; ++i) {
    BlockStream blocks(spec, seed, i, StreamPurpose::probe_blocks, StreamPurpose::probe_sizes);
    auto rng = make_stream(seed, i, StreamPurpose::probe_chunks);
    ChunkPair pair;
    for (std::uint64_t s = 0; s < t; ++s) pair = chunk_pair_step(pair, blocks.next(), rng);
    if (pair.u.site == pair.v.site && pair.u.log_size < log_theta && pair.v.log_size < log_theta) ++hits;
  }
  MeetingEstimate est;
  est.t = t;
  est.theta = theta;
  est.pairs = n_pairs;
  est.estimate = static_cast<double>(hits) / static_cast<double>(n_pairs);
  est.std_error = std::sqrt(est.estimate * (1.0 - est.estimate) / static_cast<double>(n_pairs));
  est.bound = theta + 1.0 / spec.n();
  return est;
}

/// Mass per generation j (piles of size exactly k^-j) for a deterministic-k run.
struct GenerationHistogram {
  std::map<int, double> mass;
  double dust = 0.0;  // below the floor threshold

  double total() const {
    double s = dust;
    for (const auto& [j, m] : mass) s += m;
    return s;
  }
  double at(int j) const {
    const auto it = mass.find(j);
    return it == mass.end() ? 0.0 : it->second;
  }
};

inline GenerationHistogram generation_histogram(const PileLedger& ledger, int k) {
  if (k < 2) throw DomainError("generation histogram needs k >= 2");
  const std::int64_t dk = split_key(k);
  GenerationHistogram h;
  for (std::size_t x = 0; x < ledger.n(); ++x) {
    h.dust += ledger.dust(x);
    for (const auto& b : ledger.piles_at(x)) {
      if ((-b.key) % dk != 0)
        throw UnsupportedModeError("pile size is not a power of 1/" + std::to_string(k));
      h.mass[static_cast<int>(-b.key / dk)] += b.mass();
    }
  }
  return h;
}

inline GenerationHistogram generation_histogram(const PileLedger& ledger, const BlockSizeSpec& spec) {
  if (!spec.is_deterministic())
    throw UnsupportedModeError("generation histogram requires a deterministic block size");
  return generation_histogram(ledger, spec.deterministic_size());
}

}  // namespace rba
