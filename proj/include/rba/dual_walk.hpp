#pragma once

// The random walk dual to the mass dynamics: from x, sample a block; if it
// contains x, move to a uniform block site, otherwise stay. By
// exchangeability the transition matrix has only two distinct entries, so it
// is never materialized.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "rba/engine.hpp"
#include "rba/errors.hpp"
#include "rba/size_spec.hpp"

namespace rba {

class DualWalk {
 public:
  explicit DualWalk(const BlockSizeSpec& spec)
      : n_(spec.n()),
        mean_(spec.mean()),
        stay_(1.0 - (mean_ - 1.0) / n_),
        hop_((mean_ - 1.0) / (static_cast<double>(n_) * (n_ - 1))),
        lambda_(1.0 - (mean_ - 1.0) / (n_ - 1)) {}

  int n() const { return n_; }
  double stay() const { return stay_; }
  double hop() const { return hop_; }
  /// The eigenvalue of multiplicity n-1; the other eigenvalue is 1.
  double lambda() const { return lambda_; }
  double t_rel() const { return 1.0 / (1.0 - lambda_); }

  MassDistribution transition_row(std::size_t x) const {
    if (x >= static_cast<std::size_t>(n_)) throw DomainError("site outside [0, n)");
    std::vector<double> row(static_cast<std::size_t>(n_), hop_);
    row[x] = stay_;
    return MassDistribution(std::move(row));
  }

  /// P^t(x0, .) = 1/n + (1 - 1/n) lambda^t at x0, equal shares elsewhere.
  MassDistribution t_step_distribution(std::size_t x0, std::uint64_t t) const {
    if (x0 >= static_cast<std::size_t>(n_)) throw DomainError("site outside [0, n)");
    const double n = n_;
    const double decay = std::pow(lambda_, static_cast<double>(t));
    const double at_origin = 1.0 / n + (1.0 - 1.0 / n) * decay;
    const double elsewhere = (1.0 - at_origin) / (n - 1.0);
    std::vector<double> row(static_cast<std::size_t>(n_), elsewhere);
    row[x0] = at_origin;
    return MassDistribution(std::move(row));
  }

  /// (P v)(x) = stay v(x) + hop sum_{y != x} v(y).
  std::vector<double> apply(std::span<const double> v) const {
    double total = 0.0;
    for (double a : v) total += a;
    std::vector<double> out(v.size());
    for (std::size_t x = 0; x < v.size(); ++x) out[x] = stay_ * v[x] + hop_ * (total - v[x]);
    return out;
  }

  /// (1/2)(1 - 1/t_rel)^t, a lower bound on E[d_TV(t)].
  double jensen_lower_bound(std::uint64_t t) const {
    return 0.5 * std::pow(lambda_, static_cast<double>(t));
  }

 private:
  int n_;
  double mean_;
  double stay_;
  double hop_;
  double lambda_;
};

}  // namespace rba
