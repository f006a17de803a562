#pragma once

// Test-side oracles. Nothing here calls simulation code from the library:
// blocks are enumerated as bitmasks, averaging and pile splitting are
// re-implemented directly, and integrals use a separate adaptive Simpson
// rule.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <tuple>
#include <utility>
#include <vector>

namespace oracle {

using Pmf = std::map<int, double>;

/// Every block on {0..n-1} (n <= 20) as a bitmask with its probability.
inline std::vector<std::pair<std::uint32_t, double>> blocks(int n, const Pmf& pmf) {
  std::vector<std::pair<std::uint32_t, double>> out;
  std::map<int, int> count_by_size;
  for (std::uint32_t m = 0; m < (1u << n); ++m) ++count_by_size[std::popcount(m)];
  for (std::uint32_t m = 0; m < (1u << n); ++m) {
    const int k = std::popcount(m);
    const auto it = pmf.find(k);
    if (it == pmf.end() || it->second == 0.0) continue;
    out.emplace_back(m, it->second / count_by_size[k]);
  }
  return out;
}

inline std::vector<int> sites_of(std::uint32_t mask) {
  std::vector<int> s;
  for (int i = 0; i < 32; ++i)
    if (mask & (1u << i)) s.push_back(i);
  return s;
}

inline std::vector<double> average(std::vector<double> eta, std::uint32_t mask) {
  const auto s = sites_of(mask);
  double sum = 0.0;
  for (int x : s) sum += eta[x];
  for (int x : s) eta[x] = sum / s.size();
  return eta;
}

inline std::vector<double> mean_after_one_step(int n, const Pmf& pmf, const std::vector<double>& eta) {
  std::vector<double> mean(n, 0.0);
  for (const auto& [mask, p] : blocks(n, pmf)) {
    const auto next = average(eta, mask);
    for (int x = 0; x < n; ++x) mean[x] += p * next[x];
  }
  return mean;
}

inline double l2(const std::vector<double>& eta) {
  const double n = eta.size();
  double s = 0.0;
  for (double m : eta) s += (n * m - 1.0) * (n * m - 1.0) / n;
  return s;
}

inline double expected_l2_after_one_step(int n, const Pmf& pmf, const std::vector<double>& eta) {
  double acc = 0.0;
  for (const auto& [mask, p] : blocks(n, pmf)) acc += p * l2(average(eta, mask));
  return acc;
}

/// Exact law of the number of splits of one marked chunk started at x0,
/// after t steps: dynamic programming over (site, splits).
inline std::map<int, double> chunk_split_law(int n, const Pmf& pmf, int x0, int t) {
  std::map<std::pair<int, int>, double> state{{{x0, 0}, 1.0}};
  const auto bl = blocks(n, pmf);
  for (int step = 0; step < t; ++step) {
    std::map<std::pair<int, int>, double> next;
    for (const auto& [key, q] : state) {
      const auto [site, splits] = key;
      for (const auto& [mask, p] : bl) {
        if (!(mask & (1u << site))) {
          next[{site, splits}] += q * p;
          continue;
        }
        const auto s = sites_of(mask);
        for (int y : s) next[{y, splits + 1}] += q * p / s.size();
      }
    }
    state = std::move(next);
  }
  std::map<int, double> law;
  for (const auto& [key, q] : state) law[key.second] += q;
  return law;
}

/// Exact P(two chunks started together at x0 share a site after t steps and
/// both have size < theta), deterministic block size k. Chunks in one pile
/// pick fragments independently; fragments go to sites by a uniform
/// permutation, so equal fragments share a site and distinct fragments sit
/// on distinct sites.
inline double meeting_probability(int n, int k, int x0, int t, double theta) {
  // (site u, site v, same pile, splits) -> prob; both chunks always have the
  // same number of splits while in one pile, so track splits per chunk.
  using State = std::tuple<int, int, bool, int, int>;
  std::map<State, double> st{{{x0, x0, true, 0, 0}, 1.0}};
  const auto bl = blocks(n, {{k, 1.0}});
  for (int step = 0; step < t; ++step) {
    std::map<State, double> next;
    for (const auto& [s, q] : st) {
      const auto [u, v, same, su, sv] = s;
      for (const auto& [mask, p] : bl) {
        const auto sites = sites_of(mask);
        const bool hu = mask & (1u << u), hv = mask & (1u << v);
        if (same) {
          if (!hu) {
            next[s] += q * p;
            continue;
          }
          // Enumerate fragment choices fu, fv and permutations (sigma).
          std::vector<int> perm = sites;
          std::vector<std::vector<int>> perms;
          std::sort(perm.begin(), perm.end());
          do perms.push_back(perm);
          while (std::next_permutation(perm.begin(), perm.end()));
          const double w = q * p / (static_cast<double>(k) * k * perms.size());
          for (int fu = 0; fu < k; ++fu)
            for (int fv = 0; fv < k; ++fv)
              for (const auto& pm : perms) next[{pm[fu], pm[fv], fu == fv, su + 1, sv + 1}] += w;
          continue;
        }
        // Different piles: independent permutations, so each lands uniformly.
        std::vector<std::pair<int, int>> nu, nv;
        if (hu) for (int y : sites) nu.push_back({y, su + 1});
        else nu.push_back({u, su});
        if (hv) for (int y : sites) nv.push_back({y, sv + 1});
        else nv.push_back({v, sv});
        const double w = q * p / (nu.size() * nv.size());
        for (const auto& a : nu)
          for (const auto& b : nv) next[{a.first, b.first, false, a.second, b.second}] += w;
      }
    }
    st = std::move(next);
  }
  double acc = 0.0;
  for (const auto& [s, q] : st) {
    const auto [u, v, same, su, sv] = s;
    if (u == v && std::pow(double(k), -su) < theta && std::pow(double(k), -sv) < theta) acc += q;
  }
  return acc;
}

/// Literal pile bookkeeping: per site, the multiset of pile sizes, split
/// exactly as the rule says (each pile on the block becomes k piles of
/// size s/k, one per block site).
using PileSizes = std::vector<std::multiset<double>>;

inline PileSizes split_piles(const PileSizes& piles, std::uint32_t mask) {
  const auto s = sites_of(mask);
  const double k = s.size();
  std::multiset<double> pooled;
  for (int x : s)
    for (double size : piles[x]) pooled.insert(size / k);
  PileSizes out = piles;
  for (int x : s) out[x] = pooled;
  return out;
}

/// Adaptive Simpson on [a, b].
inline double simpson(const std::function<double(double)>& f, double a, double b, double tol, int depth = 50) {
  std::function<double(double, double, double, double, double, double, double, int)> rec =
      [&](double l, double r, double fl, double fm, double fr, double whole, double eps, int d) {
        const double m = 0.5 * (l + r);
        const double lm = 0.5 * (l + m), rm = 0.5 * (m + r);
        const double flm = f(lm), frm = f(rm);
        const double left = (m - l) / 6.0 * (fl + 4.0 * flm + fm);
        const double right = (r - m) / 6.0 * (fm + 4.0 * frm + fr);
        if (d <= 0 || std::abs(left + right - whole) <= 15.0 * eps)
          return left + right + (left + right - whole) / 15.0;
        return rec(l, m, fl, flm, fm, left, eps / 2.0, d - 1) + rec(m, r, fm, frm, fr, right, eps / 2.0, d - 1);
      };
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return rec(a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, depth);
}

/// Standard normal CDF by Simpson integration of the density from -12.
inline double phi_cdf(double x) {
  if (x < -12.0) return 0.0;
  const auto pdf = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); };
  return simpson(pdf, -12.0, x, 1e-15);
}

inline double binomial_pmf(int t, double p, int j) {
  double c = 1.0;
  for (int i = 1; i <= j; ++i) c = c * (t - j + i) / i;
  return c * std::pow(p, j) * std::pow(1.0 - p, t - j);
}

/// P(Poi(lambda) <= m) summed with lgamma weights.
inline double poisson_cdf(double lambda, int m) {
  double acc = 0.0;
  for (int j = 0; j <= m; ++j) acc += std::exp(-lambda + j * std::log(lambda) - std::lgamma(j + 1.0));
  return acc;
}

}  // namespace oracle
