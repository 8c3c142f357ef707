#pragma once

#include <cstdint>
#include <map>
#include <span>

namespace misspec {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

// Wilson score interval for a binomial proportion; z = 1.96 gives 95%.
Interval wilson_interval(std::uint64_t successes, std::uint64_t n, double z = 1.96);

// Standard deviation of the proportion estimate for success probability p.
double proportion_sigma(double p, std::uint64_t n);

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

// Two-sample chi-square homogeneity test on category counts. Adjacent
// categories (in key order) are pooled until each pooled cell holds at least
// `min_pooled` observations from both samples together.
ChiSquareResult chi_square_two_sample(const std::map<std::int64_t, std::uint64_t>& a,
                                      const std::map<std::int64_t, std::uint64_t>& b,
                                      std::uint64_t min_pooled = 10);

}  // namespace misspec
