#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace ces_skill::numeric {

// ln(e^a + e^b) without overflow.
inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// ln(1 + e^x).
inline double log1p_exp(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// ln(logistic(x)) = -ln(1 + e^-x).
inline double log_logistic(double x) { return -log1p_exp(-x); }

// Logistic share kept strictly inside (0, 1).
inline double logistic(double x) {
  const double v = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                            : std::exp(x) / (1.0 + std::exp(x));
  return std::clamp(v, std::numeric_limits<double>::min(),
                    std::nextafter(1.0, 0.0));
}

// Largest natural log that still exponentiates to a finite double.
inline constexpr double kMaxLog = 709.0;

}  // namespace ces_skill::numeric
