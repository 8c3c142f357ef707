#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>

namespace misspec {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLog2E = 1.4426950408889634074;
inline constexpr double kLn2 = 0.69314718055994530942;

// log2(2^a + 2^b) without overflow.
inline double log2_add(double a, double b) noexcept {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log2(1.0 + std::exp2(b - a));
}

// log2(sum_i 2^{x_i}).
double log2_sum(std::span<const double> xs) noexcept;

// ln Gamma(x), thread-safe.
double log_gamma(double x);

// log2 of the binomial coefficient C(n, k) via log-gamma.
double log2_choose(double n, double k);

// Loader's saddle-point pieces: stirlerr(n) = ln n! - Stirling approximation,
// bd0(x, np) = x ln(x/np) + np - x computed without cancellation.
double stirlerr(double n);
double bd0(double x, double np);

// Natural-log pmfs, accurate for very large n.
double log_binomial_pmf(double k, double n, double p);
double log_poisson_pmf(double k, double lambda);

}  // namespace misspec
