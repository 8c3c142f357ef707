#include "misspec/rng.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

#include "misspec/numerics.hpp"

namespace misspec {
namespace {

// Walks outward from `mode`, alternating sides, subtracting pmf mass from a
// uniform draw until it is exhausted. `up(k)` returns pmf(k+1)/pmf(k) and
// `down(k)` returns pmf(k-1)/pmf(k).
template <class Up, class Down>
std::uint64_t invert_from_mode(double u, std::uint64_t mode, double pmf_mode,
                               std::uint64_t lo_limit, std::uint64_t hi_limit, Up up,
                               Down down) {
  u -= pmf_mode;
  if (u <= 0.0) return mode;
  std::uint64_t lo = mode, hi = mode;
  double p_lo = pmf_mode, p_hi = pmf_mode;
  bool lo_open = lo > lo_limit, hi_open = hi < hi_limit;
  while (lo_open || hi_open) {
    if (hi_open) {
      p_hi *= up(hi);
      ++hi;
      u -= p_hi;
      if (u <= 0.0) return hi;
      hi_open = hi < hi_limit && p_hi > 0.0;
    }
    if (lo_open) {
      p_lo *= down(lo);
      --lo;
      u -= p_lo;
      if (u <= 0.0) return lo;
      lo_open = lo > lo_limit && p_lo > 0.0;
    }
  }
  // Rounding left a sliver of mass unassigned.
  return mode;
}

}  // namespace

bool Rng::bernoulli(double p) noexcept {
  if (!(p > 0.0)) return false;
  if (p >= 1.0) return true;
  const auto threshold = static_cast<std::uint64_t>(std::ldexp(p, 64));
  return next() < threshold;
}

std::uint64_t Rng::binomial(std::uint64_t n, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binomial: p outside [0,1]");
  if (n == 0 || p == 0.0) return 0;
  if (p == 1.0) return n;
  if (p == 0.5 && n <= 4096) {
    std::uint64_t k = 0;
    for (; n >= 64; n -= 64) k += std::popcount(next());
    if (n > 0) k += std::popcount(next() >> (64 - n));
    return k;
  }
  if (n <= 16) {
    std::uint64_t k = 0;
    for (std::uint64_t i = 0; i < n; ++i) k += bernoulli(p);
    return k;
  }
  if (p > 0.5) return n - binomial(n, 1.0 - p);
  const double nd = static_cast<double>(n);
  const double odds = p / (1.0 - p);
  auto mode = static_cast<std::uint64_t>(std::floor((nd + 1.0) * p));
  if (mode > n) mode = n;
  const double pmf_mode = std::exp(log_binomial_pmf(static_cast<double>(mode), nd, p));
  const double u = uniform_open();
  return invert_from_mode(
      u, mode, pmf_mode, 0, n,
      [&](std::uint64_t k) {
        return static_cast<double>(n - k) / static_cast<double>(k + 1) * odds;
      },
      [&](std::uint64_t k) {
        return static_cast<double>(k) / static_cast<double>(n - k + 1) / odds;
      });
}

std::uint64_t Rng::poisson(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("poisson: lambda must be finite and >= 0");
  if (lambda == 0.0) return 0;
  const double u = uniform_open();
  if (lambda < 1e-9) return u < lambda ? 1 : 0;
  const auto mode = static_cast<std::uint64_t>(std::floor(lambda));
  const double pmf_mode = std::exp(log_poisson_pmf(static_cast<double>(mode), lambda));
  return invert_from_mode(
      u, mode, pmf_mode, 0, ~std::uint64_t{0} >> 1,
      [&](std::uint64_t k) { return lambda / static_cast<double>(k + 1); },
      [&](std::uint64_t k) { return static_cast<double>(k) / lambda; });
}

}  // namespace misspec
