#pragma once

// Limit profiles of d_TV: the Gaussian cutoff shapes, the Poisson profile of
// the non-cutoff regime, and the two-point references (metastable decay,
// half-cutoff).

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "rba/errors.hpp"

namespace rba {

/// Standard normal CDF. erfc keeps full relative accuracy in the lower tail.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
}

namespace detail {

// (1 + rho) / sqrt(1 + rho^2), with rho = inf treated as rho = 0.
inline double profile_slope(double rho) {
  if (std::isinf(rho)) return 1.0;
  return (1.0 + rho) / std::sqrt(1.0 + rho * rho);
}

inline void check_rho(double rho) {
  if (!(rho >= 0.0)) throw DomainError("rho must be nonnegative");
}

}  // namespace detail

/// Psi_rho(beta) = Phi(-beta (1 + rho) / sqrt(1 + rho^2)).
inline double psi(double rho, double beta) {
  detail::check_rho(rho);
  return normal_cdf(-beta * detail::profile_slope(rho));
}

/// Xi_rho(beta, gamma) = int phi(a) Phi(-(a + beta (1 + rho) + gamma) / rho) da,
/// evaluated in closed form; Xi_0(beta, gamma) = Phi(-beta) by convention.
inline double xi(double rho, double beta, double gamma) {
  detail::check_rho(rho);
  if (rho == 0.0) return normal_cdf(-beta);
  if (std::isinf(rho)) return normal_cdf(-beta);
  return normal_cdf(-(beta * (1.0 + rho) + gamma) / std::sqrt(1.0 + rho * rho));
}

/// P(Poi(lambda) <= m); zero for m < 0.
inline double poisson_cdf(double lambda, long long m) {
  if (!(lambda >= 0.0)) throw DomainError("Poisson mean must be nonnegative");
  if (m < 0) return 0.0;
  double term = std::exp(-lambda);
  double acc = term;
  for (long long j = 1; j <= m; ++j) {
    term *= lambda / static_cast<double>(j);
    acc += term;
  }
  return std::min(acc, 1.0);
}

inline double poisson_pmf(double lambda, long long j) {
  if (j < 0) return 0.0;
  if (lambda == 0.0) return j == 0 ? 1.0 : 0.0;
  return std::exp(-lambda + static_cast<double>(j) * std::log(lambda) - std::lgamma(j + 1.0));
}

struct ProfileBounds {
  double lower = 0.0;
  double upper = 0.0;
};

namespace detail {

// Integer candidates closer than this are treated as exact hits, so that
// decimal inputs like delta = 0.2 land on the boundary case.
inline constexpr double kIntegerSnap = 1e-9;

inline bool near_integer(double x, long long& nearest) {
  nearest = std::llround(x);
  return std::abs(x - static_cast<double>(nearest)) <= kIntegerSnap;
}

}  // namespace detail

/// lower = P(Poi(beta) < (1-delta)/delta), upper = P(Poi(beta) <= (1-delta)/delta).
inline ProfileBounds poisson_profile(double delta, double beta) {
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
  if (!(beta >= 0.0)) throw DomainError("beta must be nonnegative");
  const double m = (1.0 - delta) / delta;
  long long nearest = 0;
  if (detail::near_integer(m, nearest)) return {poisson_cdf(beta, nearest - 1), poisson_cdf(beta, nearest)};
  const auto fl = static_cast<long long>(std::floor(m));
  const double v = poisson_cdf(beta, fl);
  return {v, v};
}

/// P(Poi(beta) <= floor(1/delta)), the limit of the expected distance from a
/// Dirac start at beta n / k. Undefined when 1/delta is an integer.
inline double expected_poisson_profile(double delta, double beta) {
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
  if (!(beta >= 0.0)) throw DomainError("beta must be nonnegative");
  long long nearest = 0;
  if (detail::near_integer(1.0 / delta, nearest))
    throw DomainError("expected Poisson profile is undefined when 1/delta is an integer");
  return poisson_cdf(beta, static_cast<long long>(std::floor(1.0 / delta)));
}

enum class TrichotomyRegime { metastable, half_cutoff };

/// Two-point references in units s = t / t_ent. For half_cutoff, c is the
/// constant in a = c / log n; metastable ignores it.
inline double trichotomy_reference(TrichotomyRegime regime, double s, double c = 0.0) {
  if (!(s >= 0.0)) throw DomainError("s must be nonnegative");
  if (regime == TrichotomyRegime::metastable) return std::exp(-s);
  if (s == 1.0) throw DomainError("half-cutoff profile is not defined at s = 1");
  if (s > 1.0) return 0.0;
  return std::exp(-s * c / (2.0 * std::log(2.0)));
}

enum class ProfileKind { gaussian_cutoff, poisson_noncutoff, metastable_exp, half_cutoff };

inline const char* to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::gaussian_cutoff: return "gaussian_cutoff";
    case ProfileKind::poisson_noncutoff: return "poisson_noncutoff";
    case ProfileKind::metastable_exp: return "metastable_exp";
    case ProfileKind::half_cutoff: return "half_cutoff";
  }
  return "gaussian_cutoff";
}

inline ProfileKind profile_kind_from_string(const std::string& s) {
  if (s == "gaussian_cutoff") return ProfileKind::gaussian_cutoff;
  if (s == "poisson_noncutoff") return ProfileKind::poisson_noncutoff;
  if (s == "metastable_exp") return ProfileKind::metastable_exp;
  if (s == "half_cutoff") return ProfileKind::half_cutoff;
  throw DomainError("unknown profile kind '" + s + "'");
}

struct ProfilePoint {
  double x = 0.0;
  double value = 0.0;
};

/// A reference curve. The parameter is rho (gaussian_cutoff), delta
/// (poisson_noncutoff) or c (half_cutoff). The poisson curve is the
/// expected-distance limit from a Dirac start when 1/delta is not an
/// integer, and the upper bound relative to tau_start otherwise.
struct ProfileCurve {
  ProfileKind kind = ProfileKind::gaussian_cutoff;
  double parameter = 0.0;
  bool tau_relative = false;

  double operator()(double x) const {
    switch (kind) {
      case ProfileKind::gaussian_cutoff: return psi(parameter, x);
      case ProfileKind::poisson_noncutoff:
        return tau_relative ? poisson_profile(parameter, x).upper : expected_poisson_profile(parameter, x);
      case ProfileKind::metastable_exp: return trichotomy_reference(TrichotomyRegime::metastable, x);
      case ProfileKind::half_cutoff: return trichotomy_reference(TrichotomyRegime::half_cutoff, x, parameter);
    }
    return 0.0;
  }

  /// Points lo, lo + step, ... up to hi (inclusive within half a step).
  std::vector<ProfilePoint> evaluate(double lo, double hi, double step) const {
    if (!(step > 0.0)) throw DomainError("grid step must be positive");
    if (!(hi >= lo)) throw DomainError("grid upper bound below lower bound");
    std::vector<ProfilePoint> out;
    const auto count = static_cast<long long>(std::floor((hi - lo) / step + 0.5));
    for (long long i = 0; i <= count; ++i) {
      const double x = lo + static_cast<double>(i) * step;
      out.push_back({x, (*this)(x)});
    }
    return out;
  }
};

}  // namespace rba
