#include <gtest/gtest.h>

#include <cmath>

#include "misspec/stats.hpp"

using namespace misspec;

TEST(Wilson, Example) {
  const Interval ci = wilson_interval(50, 100);
  EXPECT_NEAR(ci.lo, 0.4038, 1e-4);
  EXPECT_NEAR(ci.hi, 0.5962, 1e-4);
}

TEST(Wilson, EdgesStayInRange) {
  const Interval zero = wilson_interval(0, 30);
  EXPECT_EQ(zero.lo, 0.0);
  EXPECT_GT(zero.hi, 0.0);
  const Interval all = wilson_interval(30, 30);
  EXPECT_LT(all.lo, 1.0);
  EXPECT_NEAR(all.hi, 1.0, 1e-15);
  for (std::uint64_t k = 0; k <= 40; ++k) {
    const Interval ci = wilson_interval(k, 40);
    EXPECT_LE(ci.lo, k / 40.0 + 1e-15);
    EXPECT_GE(ci.hi, k / 40.0 - 1e-15);
  }
}

TEST(ProportionSigma, Values) {
  EXPECT_DOUBLE_EQ(proportion_sigma(0.5, 100), 0.05);
  EXPECT_EQ(proportion_sigma(0.0, 100), 0.0);
}

TEST(ChiSquare, TwoByTwoExample) {
  const std::map<std::int64_t, std::uint64_t> a{{0, 30}, {1, 70}}, b{{0, 50}, {1, 50}};
  const ChiSquareResult r = chi_square_two_sample(a, b);
  EXPECT_NEAR(r.statistic, 25.0 / 3.0, 1e-9);
  EXPECT_EQ(r.dof, 1);
  EXPECT_NEAR(r.p_value, 0.00389, 1e-5);
}

TEST(ChiSquare, IdenticalSamples) {
  const std::map<std::int64_t, std::uint64_t> a{{0, 40}, {3, 25}, {7, 35}};
  const ChiSquareResult r = chi_square_two_sample(a, a);
  EXPECT_NEAR(r.statistic, 0.0, 1e-12);
  EXPECT_NEAR(r.p_value, 1.0, 1e-12);
}

TEST(ChiSquare, SparseCategoriesArePooled) {
  const std::map<std::int64_t, std::uint64_t> a{{0, 50}, {1, 2}, {2, 1}, {3, 47}},
      b{{0, 48}, {1, 1}, {2, 3}, {3, 48}};
  const ChiSquareResult r = chi_square_two_sample(a, b);
  EXPECT_LE(r.dof, 2);
  EXPECT_GT(r.p_value, 0.5);
}
