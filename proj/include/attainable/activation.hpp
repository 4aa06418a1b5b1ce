#pragma once

// Exact (erf-based) GeLU and its first two derivatives.

#include "errors.hpp"

#include <cmath>
#include <numbers>

namespace attainable {

struct ActivationTriple {
  double value;
  double first;
  double second;
};

/// Standard normal CDF. erfc keeps full relative accuracy in the lower tail.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

inline double normal_pdf(double x) {
  constexpr double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

namespace detail {
inline void require_finite(double x, const char* fn) {
  if (!std::isfinite(x)) throw DomainError(std::string(fn) + ": non-finite input");
}
}  // namespace detail

inline double gelu(double x) {
  detail::require_finite(x, "gelu");
  return x * normal_cdf(x);
}

inline double gelu_prime(double x) {
  detail::require_finite(x, "gelu_prime");
  return normal_cdf(x) + x * normal_pdf(x);
}

inline double gelu_second(double x) {
  detail::require_finite(x, "gelu_second");
  return normal_pdf(x) * (2.0 - x * x);
}

inline ActivationTriple gelu_all(double x) {
  detail::require_finite(x, "gelu_all");
  const double cdf = normal_cdf(x);
  const double pdf = normal_pdf(x);
  return {x * cdf, cdf + x * pdf, pdf * (2.0 - x * x)};
}

}  // namespace attainable
