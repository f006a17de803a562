#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "oracles.hpp"
#include "rba/dual_walk.hpp"
#include "rba/engine.hpp"

using namespace rba;

TEST(DualWalk, RowExamples) {
  const DualWalk w(make_deterministic(3, 2));
  EXPECT_NEAR(w.stay(), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(w.hop(), 1.0 / 6.0, 1e-15);
  const auto row = w.transition_row(1);
  EXPECT_NEAR(row[0], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(row[1], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(row[2], 1.0 / 6.0, 1e-15);

  const DualWalk full(make_deterministic(7, 7));
  EXPECT_NEAR(full.stay(), 1.0 / 7.0, 1e-15);
  EXPECT_NEAR(full.hop(), 1.0 / 7.0, 1e-15);
  EXPECT_THROW(w.transition_row(3), DomainError);
}

TEST(DualWalk, RowMatchesEnumeration) {
  // n = 3, X = 2: one step from a Dirac, averaged over all three blocks.
  const auto mean = oracle::mean_after_one_step(3, {{2, 1.0}}, {1.0, 0.0, 0.0});
  const auto row = DualWalk(make_deterministic(3, 2)).transition_row(0);
  for (int x = 0; x < 3; ++x) EXPECT_NEAR(row[x], mean[x], 1e-15);
}

TEST(DualWalkProperty, RowsAreStochastic) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    SCOPED_TRACE(gen::case_label(seed));
    gen::Gen g(seed);
    const int n = g.integer(2, 5000);
    const DualWalk w(make_table(n, g.pmf(n)));
    EXPECT_NEAR(w.stay() + (n - 1) * w.hop(), 1.0, 1e-12);
    EXPECT_GE(w.hop(), 0.0);
    EXPECT_GE(w.stay(), 0.0);
    const auto x = static_cast<std::size_t>(g.integer(0, n - 1));
    EXPECT_NEAR(w.transition_row(x).total(), 1.0, 1e-12);
  }
}

TEST(DualWalkProperty, EigenvectorIdentity) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SCOPED_TRACE(gen::case_label(seed));
    gen::Gen g(seed);
    const int n = g.integer(2, 300);
    const auto spec = make_table(n, g.pmf(n));
    const DualWalk w(spec);
    std::vector<double> v(n, 0.0);
    v[0] = 1.0;
    v[1] = -1.0;
    const auto pv = w.apply(v);
    for (int x = 0; x < n; ++x) EXPECT_NEAR(pv[x], w.lambda() * v[x], 1e-12);
    const std::vector<double> ones(n, 1.0);
    for (double a : w.apply(ones)) EXPECT_NEAR(a, 1.0, 1e-12);
    EXPECT_NEAR(w.t_rel(), timescales(spec).t_rel, 1e-9 * w.t_rel());
  }
}

TEST(DualWalk, TStepAgainstIteratedEnumeration) {
  // E[eta_t] by iterating the exact one-step mean, which is linear in eta.
  const oracle::Pmf pmf{{2, 0.5}, {4, 0.5}};
  const int n = 5;
  const DualWalk w(make_table(n, pmf));
  std::vector<double> eta{0.0, 0.0, 1.0, 0.0, 0.0};
  for (int t = 0; t <= 6; ++t) {
    const auto closed = w.t_step_distribution(2, t);
    for (int x = 0; x < n; ++x) EXPECT_NEAR(closed[x], eta[x], 1e-13) << "t=" << t;
    eta = oracle::mean_after_one_step(n, pmf, eta);
  }
}

TEST(DualWalk, TStepLimits) {
  const DualWalk w(make_deterministic(40, 3));
  const auto d0 = w.t_step_distribution(7, 0);
  EXPECT_EQ(d0[7], 1.0);
  EXPECT_NEAR(d0[0], 0.0, 1e-16);
  const auto far = w.t_step_distribution(7, 100000);
  for (std::size_t x = 0; x < 40; ++x) EXPECT_NEAR(far[x], 1.0 / 40.0, 1e-14);
}

TEST(DualWalk, MonteCarloMeanMatches) {
  const int n = 50;
  const auto spec = make_deterministic(n, 2);
  const DualWalk w(spec);
  const int reps = 10000;
  for (std::uint64_t t : {1u, 5u, 25u}) {
    double s = 0.0, ss = 0.0, sf = 0.0, ssf = 0.0;
    for (int r = 0; r < reps; ++r) {
      BlockStream blocks(spec, 31, r);
      auto eta = MassDistribution::dirac(n, 0);
      for (std::uint64_t i = 0; i < t; ++i) step_in_place(eta, blocks);
      s += eta[0];
      ss += eta[0] * eta[0];
      sf += eta[17];
      ssf += eta[17] * eta[17];
    }
    const double m = s / reps, se = std::sqrt((ss / reps - m * m) / reps);
    const double mf = sf / reps, sef = std::sqrt((ssf / reps - mf * mf) / reps);
    const auto want = w.t_step_distribution(0, t);
    EXPECT_NEAR(m, want[0], 3.0 * se) << "t=" << t;
    EXPECT_NEAR(mf, want[17], 3.0 * sef + 1e-12) << "t=" << t;
  }
}

TEST(DualWalk, JensenBound) {
  const int n = 100;
  const auto spec = make_deterministic(n, 2);
  const DualWalk w(spec);
  EXPECT_EQ(w.jensen_lower_bound(0), 0.5);
  for (std::uint64_t t = 1; t < 500; t += 7) EXPECT_LT(w.jensen_lower_bound(t), w.jensen_lower_bound(t - 1));
  const auto t = static_cast<std::uint64_t>(std::llround(w.t_rel()));
  const int reps = 2000;
  double s = 0.0, ss = 0.0;
  for (int r = 0; r < reps; ++r) {
    BlockStream blocks(spec, 8, r);
    auto eta = MassDistribution::dirac(n, 0);
    for (std::uint64_t i = 0; i < t; ++i) step_in_place(eta, blocks);
    const double d = tv_distance(eta);
    s += d;
    ss += d * d;
  }
  const double m = s / reps, se = std::sqrt((ss / reps - m * m) / reps);
  EXPECT_GE(m, w.jensen_lower_bound(t) - 3.0 * se);
}
