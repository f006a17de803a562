#pragma once

// Self-check suites behind `rba validate <suite>`. Each suite measures a
// quantity, compares it with an exact or oracle value, and reports the
// measured value next to its tolerance.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <json.hpp>

#include "rba/dual_walk.hpp"
#include "rba/engine.hpp"
#include "rba/errors.hpp"
#include "rba/io.hpp"
#include "rba/piles.hpp"
#include "rba/profiles.hpp"
#include "rba/size_spec.hpp"

namespace rba {

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;

  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
  }

  /// measured <= tolerance
  void at_most(std::string name, double measured, double tolerance) {
    checks.push_back({std::move(name), measured, tolerance, measured <= tolerance});
  }
  /// measured >= tolerance (tolerance is then a lower threshold)
  void at_least(std::string name, double measured, double threshold) {
    checks.push_back({std::move(name), measured, threshold, measured >= threshold});
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["suite"] = suite;
    j["pass"] = pass();
    j["checks"] = nlohmann::json::array();
    for (const auto& c : checks)
      j["checks"].push_back({{"name", c.name}, {"measured", c.measured}, {"tolerance", c.tolerance}, {"pass", c.pass}});
    return j;
  }
};

/// Calls f(block) for every k-subset of {0, ..., n-1}, in lexicographic order.
inline void for_each_subset(std::size_t n, std::size_t k, const std::function<void(const BlockSample&)>& f) {
  BlockSample b;
  b.sites.resize(k);
  for (std::size_t i = 0; i < k; ++i) b.sites[i] = static_cast<Site>(i);
  for (;;) {
    f(b);
    std::size_t i = k;
    while (i > 0 && b.sites[i - 1] == n - k + i - 1) --i;
    if (i == 0) return;
    ++b.sites[i - 1];
    for (std::size_t j = i; j < k; ++j) b.sites[j] = b.sites[j - 1] + 1;
  }
}

inline double binomial_coefficient(std::size_t n, std::size_t k) {
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return c;
}

/// E[eta_1] over every block, exactly.
inline std::vector<double> exact_one_step_mean(const BlockSizeSpec& spec, const MassDistribution& eta) {
  const auto n = static_cast<std::size_t>(spec.n());
  std::vector<double> mean(n, 0.0);
  for (const auto& [k, p] : spec.pmf()) {
    const double w = p / binomial_coefficient(n, static_cast<std::size_t>(k));
    for_each_subset(n, static_cast<std::size_t>(k), [&](const BlockSample& b) {
      const auto next = average_block(eta, b);
      for (std::size_t x = 0; x < n; ++x) mean[x] += w * next[x];
    });
  }
  return mean;
}

/// E[f(eta_1)] over every block, exactly.
inline double exact_one_step_expectation(const BlockSizeSpec& spec, const MassDistribution& eta,
                                         const std::function<double(const MassDistribution&)>& f) {
  const auto n = static_cast<std::size_t>(spec.n());
  double acc = 0.0;
  for (const auto& [k, p] : spec.pmf()) {
    const double w = p / binomial_coefficient(n, static_cast<std::size_t>(k));
    for_each_subset(n, static_cast<std::size_t>(k), [&](const BlockSample& b) { acc += w * f(average_block(eta, b)); });
  }
  return acc;
}

namespace detail {

inline std::vector<BlockSizeSpec> duality_specs(int n) {
  std::vector<BlockSizeSpec> specs{make_deterministic(n, 2)};
  if (n >= 3) {
    specs.push_back(make_deterministic(n, 3));
    specs.push_back(make_table(n, {{2, 0.5}, {3, 0.5}}));
  }
  return specs;
}

// A fixed, uneven probability vector for the exhaustive checks.
inline MassDistribution uneven_state(std::size_t n, std::uint64_t seed) {
  auto rng = make_stream(seed, n, StreamPurpose::test);
  std::vector<double> m(n);
  double s = 0.0;
  for (auto& v : m) {
    v = rng.uniform01() + 0.01;
    s += v;
  }
  for (auto& v : m) v /= s;
  return MassDistribution(m);
}

}  // namespace detail

inline SuiteReport validate_duality() {
  SuiteReport r{"duality", {}};
  for (int n = 3; n <= 6; ++n) {
    for (const auto& spec : detail::duality_specs(n)) {
      const DualWalk walk(spec);
      double worst = 0.0;
      for (std::size_t x0 = 0; x0 < static_cast<std::size_t>(n); ++x0) {
        const auto mean = exact_one_step_mean(spec, MassDistribution::dirac(n, x0));
        const auto row = walk.transition_row(x0);
        for (std::size_t x = 0; x < mean.size(); ++x) worst = std::max(worst, std::abs(mean[x] - row[x]));
      }
      r.at_most("row n=" + std::to_string(n) + " mean=" + fmt(spec.mean()), worst, 1e-12);
      std::vector<double> v(static_cast<std::size_t>(n), 0.0);
      v[0] = 1.0;
      v[1] = -1.0;
      const auto pv = walk.apply(v);
      double gap = 0.0;
      for (std::size_t x = 0; x < v.size(); ++x) gap = std::max(gap, std::abs(pv[x] - walk.lambda() * v[x]));
      r.at_most("eigenvector n=" + std::to_string(n) + " mean=" + fmt(spec.mean()), gap, 1e-12);
    }
  }
  return r;
}

inline SuiteReport validate_l2_identity(std::uint64_t seed = 1) {
  SuiteReport r{"l2_identity", {}};
  for (int n = 2; n <= 8; ++n) {
    for (const auto& spec : detail::duality_specs(n)) {
      const auto eta = detail::uneven_state(static_cast<std::size_t>(n), seed);
      const double lhs = exact_one_step_expectation(spec, eta, [](const MassDistribution& m) { return l2_sq(m); });
      const double rhs = (1.0 - 1.0 / timescales(spec).t_rel) * l2_sq(eta);
      r.at_most("exact n=" + std::to_string(n) + " mean=" + fmt(spec.mean()), std::abs(lhs - rhs), 1e-10);
    }
  }
  const int n = 100;
  const auto spec = make_deterministic(n, 2);
  const double lambda = 1.0 - 1.0 / timescales(spec).t_rel;
  const std::uint64_t replicas = 2000;
  const std::vector<std::uint64_t> times{0, 10, 25, 50, 100, 150, 200};
  std::vector<std::vector<double>> samples(times.size());
  for (std::uint64_t rep = 0; rep < replicas; ++rep) {
    TrajectoryOptions opt;
    opt.t_max = times.back();
    opt.schedule = RecordSchedule::at(times);
    const auto rec = run_trajectory(spec, opt, seed, rep);
    for (std::size_t i = 0; i < times.size(); ++i) samples[i].push_back(rec.entries[i].l2_sq);
  }
  for (std::size_t i = 0; i < times.size(); ++i) {
    double sum = 0.0, ss = 0.0;
    for (double v : samples[i]) sum += v;
    const double mean = sum / replicas;
    for (double v : samples[i]) ss += (v - mean) * (v - mean);
    const double se = std::sqrt(ss / (replicas - 1) / replicas);
    const double expected = std::pow(lambda, static_cast<double>(times[i])) * (n - 1);
    // Measured in standard errors; a zero-variance point must match exactly.
    const double z = se > 0.0 ? std::abs(mean - expected) / se : (std::abs(mean - expected) < 1e-9 ? 0.0 : 1e9);
    r.at_most("mc n=100 t=" + std::to_string(times[i]) + " |z|", z, 3.0);
  }
  return r;
}

inline SuiteReport validate_entropy_bounds(std::uint64_t seed = 1) {
  SuiteReport r{"entropy_bounds", {}};
  const int n = 100;
  const auto spec = make_uniform(n, 2, 4);
  const auto ts = timescales(spec);
  const double log_n = std::log(static_cast<double>(n));
  const std::uint64_t replicas = 1000;
  std::vector<std::uint64_t> times;
  for (std::uint64_t t = 0; t <= 300; t += 10) times.push_back(t);
  std::vector<std::vector<double>> samples(times.size());
  for (std::uint64_t rep = 0; rep < replicas; ++rep) {
    TrajectoryOptions opt;
    opt.t_max = times.back();
    opt.schedule = RecordSchedule::at(times);
    const auto rec = run_trajectory(spec, opt, seed, rep);
    for (std::size_t i = 0; i < times.size(); ++i) samples[i].push_back(rec.entries[i].entropy);
  }
  double worst_low = -1e300, worst_high = -1e300;
  for (std::size_t i = 0; i < times.size(); ++i) {
    double sum = 0.0, ss = 0.0;
    for (double v : samples[i]) sum += v;
    const double mean = sum / replicas;
    for (double v : samples[i]) ss += (v - mean) * (v - mean);
    const double se = std::sqrt(ss / (replicas - 1) / replicas);
    const double t = static_cast<double>(times[i]);
    const double low = log_n - t * log_n / ts.t_ent;
    const double high = std::pow(1.0 - 1.0 / ts.t_ent, t) * log_n;
    worst_low = std::max(worst_low, low - 3.0 * se - mean);
    worst_high = std::max(worst_high, mean - high - 3.0 * se);
  }
  // At t = 0 every replica sits on both envelopes and se = 0, so only
  // rounding separates them.
  r.at_most("lower envelope excess (max over t)", worst_low, 1e-12);
  r.at_most("upper envelope excess (max over t)", worst_high, 1e-12);
  return r;
}

/// Pearson statistic and p-value of observed counts against probabilities.
struct ChiSquare {
  double statistic = 0.0;
  double p_value = 0.0;
};

inline ChiSquare chi_square(const std::vector<std::uint64_t>& counts, const std::vector<double>& probs) {
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  ChiSquare out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = total * probs[i];
    out.statistic += (counts[i] - e) * (counts[i] - e) / e;
  }
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
  return out;
}

inline SuiteReport validate_pile_law(std::uint64_t seed = 1) {
  SuiteReport r{"pile_law", {}};
  const auto spec = make_deterministic(3, 2);
  const std::uint64_t samples = 100000;
  const std::vector<double> law{1.0 / 9.0, 4.0 / 9.0, 4.0 / 9.0};  // splits 0, 1, 2
  std::vector<std::uint64_t> engine_counts(3, 0), direct_counts(3, 0);
  for (std::uint64_t i = 0; i < samples; ++i) {
    BlockStream blocks(spec, seed, i);
    auto rng = make_stream(seed, i, StreamPurpose::chunk);
    ChunkMark m;
    for (int s = 0; s < 2; ++s) m = chunk_step(m, blocks.next(), rng);
    ++engine_counts[m.splits];
  }
  const DirectPileSizeSampler direct(spec);
  auto rng = make_stream(seed, 0, StreamPurpose::direct_sampler);
  for (std::uint64_t i = 0; i < samples; ++i) ++direct_counts[direct.sample(2, rng).splits];
  r.at_least("chunk frequencies p-value", chi_square(engine_counts, law).p_value, 0.001);
  r.at_least("direct sampler p-value", chi_square(direct_counts, law).p_value, 0.001);
  return r;
}

inline SuiteReport validate_meeting_bound(std::uint64_t seed = 1) {
  SuiteReport r{"meeting_bound", {}};
  for (int n : {50, 200}) {
    const auto spec = make_deterministic(n, 2);
    for (std::uint64_t t : {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(5 * n)}) {
      for (double theta : {0.1, 0.5}) {
        const auto est = meeting_probe(spec, t, theta, 10000, seed);
        r.at_most("n=" + std::to_string(n) + " t=" + std::to_string(t) + " theta=" + fmt(theta) +
                      " estimate - 3se",
                  est.estimate - 3.0 * est.std_error, est.bound);
      }
    }
  }
  return r;
}

/// Xi_rho(beta, gamma) by adaptive Gauss-Kronrod on the defining integral,
/// split at the kink of the inner CDF.
inline double xi_quadrature(double rho, double beta, double gamma) {
  const double c = beta * (1.0 + rho) + gamma;
  auto f = [&](double a) { return normal_pdf(a) * normal_cdf(-(a + c) / rho); };
  using boost::math::quadrature::gauss_kronrod;
  const double lo = -14.0, hi = 14.0;
  const double mid = std::clamp(-c, lo, hi);
  double acc = 0.0;
  if (mid > lo) acc += gauss_kronrod<double, 61>::integrate(f, lo, mid, 15, 1e-12);
  if (hi > mid) acc += gauss_kronrod<double, 61>::integrate(f, mid, hi, 15, 1e-12);
  return acc;
}

inline SuiteReport validate_profile_math() {
  SuiteReport r{"profile_math", {}};
  r.at_most("Phi(0)", std::abs(normal_cdf(0.0) - 0.5), 1e-12);
  r.at_most("Phi(-1.96)", std::abs(normal_cdf(-1.96) - 0.024997895148220435), 1e-12);
  r.at_most("Phi(-sqrt 2)", std::abs(normal_cdf(-std::sqrt(2.0)) - 0.07864960352514251), 1e-12);

  double worst_xi = 0.0;
  for (double rho : {0.1, 1.0, 5.0})
    for (double beta = -3.0; beta <= 3.0 + 1e-12; beta += 0.25)
      for (double gamma = -3.0; gamma <= 3.0 + 1e-12; gamma += 0.25)
        worst_xi = std::max(worst_xi, std::abs(xi_quadrature(rho, beta, gamma) - xi(rho, beta, gamma)));
  r.at_most("xi quadrature vs closed form", worst_xi, 1e-8);

  double worst_sym = 0.0, worst_order = 0.0, worst_mono = 0.0;
  for (double rho : {0.05, 0.3, 0.5, 2.0, 3.0, 20.0}) {
    double prev = 2.0;
    for (double beta = -4.0; beta <= 4.0 + 1e-12; beta += 0.05) {
      worst_sym = std::max(worst_sym, std::abs(psi(rho, beta) - psi(1.0 / rho, beta)));
      if (beta > 0.0) {
        worst_order = std::max(worst_order, psi(rho, beta) - psi(0.0, beta));
        worst_order = std::max(worst_order, psi(1.0, beta) - psi(rho, beta));
      }
      const double v = psi(rho, beta);
      worst_mono = std::max(worst_mono, v - prev);
      prev = v;
    }
  }
  r.at_most("psi symmetry rho <-> 1/rho", worst_sym, 1e-12);
  r.at_most("psi ordering violation", worst_order, 0.0);
  r.at_most("psi monotonicity violation", worst_mono, 0.0);

  double worst_gap = 1.0;
  for (double delta : {0.5, 1.0 / 3.0, 0.25, 0.2})
    for (double beta : {0.5, 1.0, 2.0, 5.0}) {
      const auto b = poisson_profile(delta, beta);
      worst_gap = std::min(worst_gap, b.upper - b.lower);
    }
  r.at_least("poisson boundary gap upper - lower (min)", worst_gap, 1e-300);
  return r;
}

inline const std::vector<std::string>& validation_suites() {
  static const std::vector<std::string> names{"duality",     "l2_identity",   "entropy_bounds",
                                              "pile_law",    "meeting_bound", "profile_math"};
  return names;
}

inline SuiteReport run_validation(const std::string& suite, std::uint64_t seed = 1) {
  if (suite == "duality") return validate_duality();
  if (suite == "l2_identity") return validate_l2_identity(seed);
  if (suite == "entropy_bounds") return validate_entropy_bounds(seed);
  if (suite == "pile_law") return validate_pile_law(seed);
  if (suite == "meeting_bound") return validate_meeting_bound(seed);
  if (suite == "profile_math") return validate_profile_math();
  throw DomainError("unknown validation suite '" + suite + "'");
}

}  // namespace rba
