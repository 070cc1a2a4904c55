#pragma once

// Standard-normal helpers and unit-variance truncated-normal moments used by
// the probit latent-variable updates. Everything here is stable for
// |location| up to about 38, where the naive ratio phi/Phi underflows.

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nexon::special {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))
inline constexpr double kHalfLog2PiE = kLogSqrt2Pi + 0.5;

/// Scaled complementary error function exp(x^2) * erfc(x).
inline double erfcx(double x) {
  if (x < 0.0) return 2.0 * std::exp(x * x) - erfcx(-x);
  if (x < 4.0) return std::exp(x * x) * std::erfc(x);
  // Continued fraction erfcx(x) = 1/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
  double tail = x;
  for (int k = 80; k >= 1; --k) tail = x + (0.5 * k) / tail;
  return 1.0 / (std::sqrt(std::numbers::pi) * tail);
}

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x - kLogSqrt2Pi); }

inline double log_norm_pdf(double x, double sd) {
  const double z = x / sd;
  return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double log_norm_cdf(double x) {
  if (x >= 0.0) return std::log1p(-0.5 * std::erfc(x / std::numbers::sqrt2));
  return std::log(0.5 * erfcx(-x / std::numbers::sqrt2)) - 0.5 * x * x;
}

inline double norm_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

/// phi(x) / Phi(x), the inverse Mills ratio of the lower tail.
inline double inverse_mills(double x) {
  if (x >= 0.0) return norm_pdf(x) / norm_cdf(x);
  return std::sqrt(2.0 / std::numbers::pi) / erfcx(-x / std::numbers::sqrt2);
}

inline double digamma(double x) { return boost::math::digamma(x); }

/// Moments of N(location, 1) truncated to (0, inf) and to (-inf, 0].
struct TruncatedMoments {
  double mean_above0;
  double mean_below0;
  double var_above0;
  double var_below0;
};

inline TruncatedMoments truncated_normal_moments(double location) {
  const double r_up = inverse_mills(location);    // phi(m) / Phi(m)
  const double r_dn = inverse_mills(-location);   // phi(m) / (1 - Phi(m))
  TruncatedMoments t{};
  t.mean_above0 = location + r_up;
  t.mean_below0 = location - r_dn;
  // Clamp rounding noise; the exact variances are strictly positive.
  t.var_above0 = std::max(1.0 - location * r_up - r_up * r_up, 1e-300);
  t.var_below0 = std::max(1.0 + location * r_dn - r_dn * r_dn, 1e-300);
  return t;
}

// Differential entropies of the two truncated halves.
inline double truncated_entropy_above0(double location) {
  return kHalfLog2PiE + log_norm_cdf(location) - 0.5 * location * inverse_mills(location);
}

inline double truncated_entropy_below0(double location) {
  return truncated_entropy_above0(-location);
}

inline double bernoulli_entropy(double p) {
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
  return h;
}

}  // namespace nexon::special
