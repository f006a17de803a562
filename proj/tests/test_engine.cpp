#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "generators.hpp"
#include "oracles.hpp"
#include "rba/dual_walk.hpp"
#include "rba/engine.hpp"

using namespace rba;

namespace {

BlockSample block(std::vector<Site> s) {
  std::sort(s.begin(), s.end());
  return BlockSample{s};
}

}  // namespace

TEST(Engine, AverageBlockExamples) {
  const auto a = average_block(MassDistribution({1, 0, 0, 0}), block({0, 1}));
  EXPECT_EQ(std::vector<double>(a.masses().begin(), a.masses().end()), (std::vector<double>{0.5, 0.5, 0, 0}));
  const auto u = MassDistribution::uniform(5);
  const auto b = average_block(u, block({0, 2, 4}));
  for (std::size_t x = 0; x < 5; ++x) EXPECT_DOUBLE_EQ(b[x], 0.2);
  const auto c = average_block(MassDistribution({0.5, 0.25, 0.25, 0}), block({1, 2, 3}));
  EXPECT_DOUBLE_EQ(c[0], 0.5);
  for (std::size_t x = 1; x < 4; ++x) EXPECT_NEAR(c[x], 1.0 / 6.0, 1e-17);
}

TEST(Engine, FunctionalExamples) {
  const auto d = MassDistribution::dirac(4, 0);
  EXPECT_DOUBLE_EQ(tv_distance(d), 0.75);
  EXPECT_NEAR(relative_entropy(d), std::log(4.0), 1e-15);
  EXPECT_DOUBLE_EQ(l2_sq(d), 3.0);
  const auto u = MassDistribution::uniform(7);
  EXPECT_NEAR(tv_distance(u), 0.0, 1e-16);
  EXPECT_NEAR(relative_entropy(u), 0.0, 1e-15);
  EXPECT_NEAR(l2_sq(u), 0.0, 1e-14);
  for (std::size_t k : {1u, 3u, 10u, 40u}) EXPECT_NEAR(tv_distance(MassDistribution::eta_start(40, k)), 1.0 - k / 40.0, 1e-15);
  const MassDistribution two({0.75, 0.25});
  EXPECT_NEAR(relative_entropy(two), 0.75 * std::log(1.5) + 0.25 * std::log(0.5), 1e-15);
  EXPECT_NEAR(relative_entropy(two), 0.13081203594113694, 1e-15);
  EXPECT_DOUBLE_EQ(l2_sq(two), 0.25);
}

TEST(Engine, TvIsHalfL1) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    gen::Gen g(seed);
    const int n = g.integer(2, 60);
    const MassDistribution eta(g.simplex(n));
    double l1 = 0.0;
    for (double m : eta.masses()) l1 += std::abs(m - 1.0 / n);
    EXPECT_NEAR(tv_distance(eta), 0.5 * l1, 1e-14) << gen::case_label(seed);
  }
}

TEST(Engine, InvalidMassesRejected) {
  EXPECT_THROW(MassDistribution({0.5, 0.4}), DomainError);
  EXPECT_THROW(MassDistribution({1.5, -0.5}), DomainError);
  EXPECT_THROW(MassDistribution::dirac(3, 3), DomainError);
}

TEST(Engine, SubsetSamplerBothPaths) {
  for (std::size_t n : {10u, 1000u}) {
    for (std::size_t k : {std::size_t{2}, std::size_t{5}, n}) {
      if (k > n) continue;
      SubsetSampler s(n);
      auto rng = make_stream(1, n + k, StreamPurpose::test);
      std::vector<Site> out;
      std::vector<int> hits(n, 0);
      const int reps = 20000;
      for (int r = 0; r < reps; ++r) {
        s.sample(k, rng, out);
        ASSERT_EQ(out.size(), k);
        ASSERT_TRUE(std::is_sorted(out.begin(), out.end()));
        ASSERT_TRUE(std::adjacent_find(out.begin(), out.end()) == out.end());
        for (Site x : out) ++hits[x];
      }
      const double p = static_cast<double>(k) / n;
      for (std::size_t x = 0; x < n; ++x)
        EXPECT_NEAR(hits[x] / double(reps), p, 5.0 * std::sqrt(p * (1 - p) / reps) + 1e-12);
    }
  }
}

TEST(Engine, SubsetSamplerUniformOverPairs) {
  // All C(6,2) = 15 pairs equally likely, on the partial-shuffle path.
  SubsetSampler s(6);
  auto rng = make_stream(2, 0, StreamPurpose::test);
  std::map<std::vector<Site>, int> counts;
  std::vector<Site> out;
  const int reps = 150000;
  for (int r = 0; r < reps; ++r) {
    s.sample(2, rng, out);
    ++counts[out];
  }
  ASSERT_EQ(counts.size(), 15u);
  double chi2 = 0.0;
  for (const auto& [b, c] : counts) chi2 += (c - reps / 15.0) * (c - reps / 15.0) / (reps / 15.0);
  EXPECT_LT(chi2, 36.12);  // chi-square(14) upper 0.001 point
}

TEST(Engine, FullBlockMixesInOneStep) {
  const auto spec = make_deterministic(30, 30);
  TrajectoryOptions opt;
  opt.t_max = 5;
  opt.schedule = RecordSchedule::grid(0, 5, 1);
  const auto rec = run_trajectory(spec, opt, 1, 0);
  ASSERT_EQ(rec.entries.size(), 6u);
  EXPECT_DOUBLE_EQ(rec.entries[0].d_tv, 1.0 - 1.0 / 30);
  for (std::size_t i = 1; i < rec.entries.size(); ++i) EXPECT_NEAR(rec.entries[i].d_tv, 0.0, 1e-15);
  EXPECT_EQ(rec.tau_start, 1u);
}

TEST(Engine, ZeroHorizon) {
  TrajectoryOptions opt;
  opt.schedule = RecordSchedule::at({0});
  const auto rec = run_trajectory(make_deterministic(9, 3), opt, 1, 0);
  ASSERT_EQ(rec.entries.size(), 1u);
  EXPECT_DOUBLE_EQ(rec.entries[0].d_tv, 1.0 - 1.0 / 9);
  EXPECT_EQ(rec.steps, 0u);
}

TEST(Engine, ScheduleBeyondHorizonIsTruncated) {
  TrajectoryOptions opt;
  opt.t_max = 10;
  opt.schedule = RecordSchedule::at({0, 5, 20, 30});
  const auto rec = run_trajectory(make_deterministic(9, 3), opt, 1, 0);
  EXPECT_EQ(rec.entries.size(), 2u);
  EXPECT_EQ(rec.truncated_points, 2u);
}

TEST(Engine, DiracStepWithPairs) {
  // X = 2 from a Dirac at n = 4: the one-step law over all six blocks.
  const auto spec = make_deterministic(4, 2);
  std::map<std::vector<double>, double> law;
  for (const auto& [mask, p] : oracle::blocks(4, {{2, 1.0}})) law[oracle::average({1, 0, 0, 0}, mask)] += p;
  EXPECT_NEAR((law[std::vector<double>{1, 0, 0, 0}]), 0.5, 1e-15);  // 3 of 6 blocks miss site 0
  std::map<std::vector<double>, int> seen;
  const int reps = 60000;
  for (int r = 0; r < reps; ++r) {
    BlockStream blocks(spec, 4, r);
    auto [eta, b] = step(MassDistribution::dirac(4, 0), blocks);
    std::vector<double> v(eta.masses().begin(), eta.masses().end());
    ASSERT_TRUE(law.count(v));
    ++seen[v];
  }
  for (const auto& [v, p] : law) EXPECT_NEAR(seen[v] / double(reps), p, 5.0 * std::sqrt(p * (1 - p) / reps));
  // Two nonzero entries with probability 2/n.
  int two = 0;
  for (const auto& [v, c] : seen)
    if (std::count(v.begin(), v.end(), 0.0) == 2) two += c;
  EXPECT_NEAR(two / double(reps), 0.5, 5.0 * std::sqrt(0.25 / reps));
}

TEST(Engine, TauStartMeanIsNOverK) {
  const int n = 60, k = 4;
  const auto spec = make_deterministic(n, k);
  double sum = 0.0, ss = 0.0;
  const int reps = 4000;
  for (int r = 0; r < reps; ++r) {
    TrajectoryOptions opt;
    opt.schedule = RecordSchedule::after_tau_start({0});
    opt.t_max = 100000;
    const auto rec = run_trajectory(spec, opt, 8, r);
    ASSERT_TRUE(rec.tau_start.has_value());
    sum += *rec.tau_start;
    ss += double(*rec.tau_start) * *rec.tau_start;
    // At tau_start from a Dirac the state is eta_start.
    ASSERT_EQ(rec.entries.size(), 1u);
    EXPECT_NEAR(rec.entries[0].d_tv, 1.0 - double(k) / n, 1e-14);
  }
  const double mean = sum / reps;
  const double se = std::sqrt((ss / reps - mean * mean) / reps);
  EXPECT_NEAR(mean, double(n) / k, 3.0 * se);
}

TEST(Engine, TauRelativeRecordsShift) {
  TrajectoryOptions opt;
  opt.schedule = RecordSchedule::after_tau_start({0, 3, 7});
  opt.t_max = 10000;
  const auto rec = run_trajectory(make_deterministic(50, 5), opt, 2, 3);
  ASSERT_TRUE(rec.tau_start);
  ASSERT_EQ(rec.entries.size(), 3u);
  EXPECT_EQ(rec.entries[0].t, *rec.tau_start);
  EXPECT_EQ(rec.entries[1].t, *rec.tau_start + 3);
  EXPECT_EQ(rec.entries[2].t, *rec.tau_start + 7);
  EXPECT_EQ(rec.steps, *rec.tau_start + 7);
}

TEST(Engine, Determinism) {
  const auto spec = make_uniform(80, 2, 6);
  TrajectoryOptions opt;
  opt.t_max = 500;
  opt.schedule = RecordSchedule::grid(0, 500, 25);
  const auto a = run_trajectory(spec, opt, 77, 5);
  const auto b = run_trajectory(spec, opt, 77, 5);
  const auto c = run_trajectory(spec, opt, 77, 6);
  ASSERT_EQ(a.entries.size(), b.entries.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_EQ(a.entries[i].d_tv, b.entries[i].d_tv);
    EXPECT_EQ(a.entries[i].entropy, b.entries[i].entropy);
    differs = differs || a.entries[i].d_tv != c.entries[i].d_tv;
  }
  EXPECT_TRUE(differs);
}

// Properties: mass conservation and monotone d_TV along random runs.
TEST(EngineProperty, ConservationAndMonotonicity) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    SCOPED_TRACE(gen::case_label(seed));
    gen::Gen g(seed);
    const int n = g.integer(2, 300);
    const auto spec = make_table(n, g.pmf(n));
    MassDistribution eta(g.simplex(n));
    BlockStream blocks(spec, seed, 0);
    double prev = tv_distance(eta);
    for (int t = 0; t < 400; ++t) {
      step_in_place(eta, blocks);
      const double d = tv_distance(eta);
      ASSERT_LE(d, prev + 1e-12);
      ASSERT_GE(d, -1e-15);
      ASSERT_LE(d, 1.0 - 1.0 / n + 1e-12);
      prev = d;
    }
    EXPECT_NEAR(eta.total(), 1.0, 1e-9);
    for (double m : eta.masses()) EXPECT_GE(m, 0.0);
  }
}

TEST(EngineProperty, LongRunConservation) {
  const auto spec = make_deterministic(1000, 2);
  TrajectoryOptions opt;
  opt.t_max = 300000;  // several renormalization checkpoints
  opt.schedule = RecordSchedule::at({300000});
  MassDistribution final_state;
  struct Keep {
    MassDistribution* out;
    void on_step(std::uint64_t, const BlockSample&, const MassDistribution&) {}
    void on_record(const TrajectoryEntry&, const MassDistribution& eta) { *out = eta; }
  };
  run_trajectory(spec, opt, 3, 0, Keep{&final_state});
  EXPECT_NEAR(final_state.total(), 1.0, 1e-12);
}

TEST(EngineOracle, OneStepDualityExhaustive) {
  for (int n = 3; n <= 6; ++n) {
    for (const auto& pmf : {oracle::Pmf{{2, 1.0}}, oracle::Pmf{{3, 1.0}}, oracle::Pmf{{2, 0.5}, {3, 0.5}}}) {
      const DualWalk walk(make_table(n, pmf));
      for (int x0 = 0; x0 < n; ++x0) {
        std::vector<double> dirac(n, 0.0);
        dirac[x0] = 1.0;
        const auto mean = oracle::mean_after_one_step(n, pmf, dirac);
        const auto row = walk.transition_row(x0);
        for (int x = 0; x < n; ++x) EXPECT_NEAR(mean[x], row[x], 1e-12) << "n=" << n << " x0=" << x0;
      }
    }
  }
}

TEST(EngineOracle, OneStepL2IdentityExhaustive) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    SCOPED_TRACE(gen::case_label(seed));
    gen::Gen g(seed);
    const int n = g.integer(2, 8);
    const auto pmf = g.pmf(n, 3);
    const auto eta = g.simplex(n);
    const double t_rel = timescales(make_table(n, pmf)).t_rel;
    EXPECT_NEAR(oracle::expected_l2_after_one_step(n, pmf, eta), (1.0 - 1.0 / t_rel) * oracle::l2(eta), 1e-10);
  }
}
