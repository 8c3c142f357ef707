#include "misspec/numerics.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <numbers>

namespace misspec {

double log2_sum(std::span<const double> xs) noexcept {
  double hi = kNegInf;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : xs) acc += std::exp2(x - hi);
  return hi + std::log2(acc);
}

double log_gamma(double x) { return boost::math::lgamma(x); }

double log2_choose(double n, double k) {
  if (k < 0 || k > n) return kNegInf;
  if (k == 0 || k == n) return 0.0;
  return (log_gamma(n + 1) - log_gamma(k + 1) - log_gamma(n - k + 1)) * kLog2E;
}

double stirlerr(double n) {
  constexpr double s0 = 1.0 / 12.0;
  constexpr double s1 = 1.0 / 360.0;
  constexpr double s2 = 1.0 / 1260.0;
  constexpr double s3 = 1.0 / 1680.0;
  constexpr double s4 = 1.0 / 1188.0;
  if (n <= 15.0) {
    if (n == 0.0) return 0.0;
    return log_gamma(n + 1.0) - (n + 0.5) * std::log(n) + n -
           0.5 * std::log(2.0 * std::numbers::pi);
  }
  const double nn = n * n;
  if (n > 500) return (s0 - s1 / nn) / n;
  if (n > 80) return (s0 - (s1 - s2 / nn) / nn) / n;
  if (n > 35) return (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / n;
  return (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / n;
}

double bd0(double x, double np) {
  if (std::fabs(x - np) < 0.1 * (x + np)) {
    const double v = (x - np) / (x + np);
    double s = (x - np) * v;
    double ej = 2.0 * x * v;
    const double v2 = v * v;
    for (int j = 1; j < 1000; ++j) {
      ej *= v2;
      const double s1 = s + ej / (2 * j + 1);
      if (s1 == s) return s1;
      s = s1;
    }
    return s;
  }
  return x * std::log(x / np) + np - x;
}

double log_binomial_pmf(double k, double n, double p) {
  if (k < 0 || k > n) return kNegInf;
  const double q = 1.0 - p;
  if (p == 0.0) return k == 0 ? 0.0 : kNegInf;
  if (q == 0.0) return k == n ? 0.0 : kNegInf;
  if (k == 0) return n * std::log1p(-p);
  if (k == n) return n * std::log(p);
  const double lc = stirlerr(n) - stirlerr(k) - stirlerr(n - k) - bd0(k, n * p) -
                    bd0(n - k, n * q);
  return lc + 0.5 * std::log(n / (2.0 * std::numbers::pi * k * (n - k)));
}

double log_poisson_pmf(double k, double lambda) {
  if (k < 0) return kNegInf;
  if (lambda == 0.0) return k == 0 ? 0.0 : kNegInf;
  if (k == 0) return -lambda;
  return -stirlerr(k) - bd0(k, lambda) - 0.5 * std::log(2.0 * std::numbers::pi * k);
}

}  // namespace misspec
