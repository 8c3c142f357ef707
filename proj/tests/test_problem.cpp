#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <map>

#include "misspec/learners.hpp"
#include "misspec/problem.hpp"
#include "misspec/stats.hpp"

using namespace misspec;

namespace {

const ProblemSpec kSpec = ProblemSpec::make(0.2, 0.3, 0.5);

std::uint64_t checksum(const ExplicitSample& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&](std::uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ULL;
  };
  for (std::size_t i = 0; i < s.m; ++i) mix(s.labels[i] | s.hard[i] << 1 | s.good_error[i] << 2);
  for (std::uint64_t w : s.bad_bits) mix(w);
  return h;
}

// Per-block minimum error count in an aggregated sample.
std::vector<std::uint64_t> block_minima(const AggregatedSample& a) {
  std::vector<std::uint64_t> out;
  for (const BlockCells& b : a.blocks) {
    std::uint64_t best = ~std::uint64_t{0};
    for (const SampledCell& c : b.cells)
      if (!c.exact || c.count > 0) best = std::min<std::uint64_t>(best, c.h);
    for (const DetRange& r : b.ranges) best = std::min<std::uint64_t>(best, r.h_lo);
    out.push_back(best);
  }
  return out;
}

std::vector<std::uint64_t> block_minima(const ExplicitSample& e) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t j = 1; j <= e.num_bad; ++j) {
    const std::uint32_t b = ClassifierPrior::block_of(j);
    if (out.size() < b) out.push_back(~std::uint64_t{0});
    out[b - 1] = std::min(out[b - 1], e.bad_error_count(j));
  }
  return out;
}

}  // namespace

TEST(ProblemSpec, Validation) {
  EXPECT_THROW(ProblemSpec::make(0.2, 0.6, 0.5), std::invalid_argument);  // p_hard > 1
  EXPECT_THROW(ProblemSpec::make(0.3, 0.2, 0.5), std::invalid_argument);
  EXPECT_THROW(ProblemSpec::make(0.2, 0.3, 0.4), std::invalid_argument);
  EXPECT_THROW(ProblemSpec::make(0.0, 0.3, 0.5), std::invalid_argument);
  EXPECT_NO_THROW(ProblemSpec::make(0.2, 1.0, 1.0));
  EXPECT_DOUBLE_EQ(kSpec.p_hard(), 0.6);
}

TEST(ProblemSpec, RegimeFlag) {
  EXPECT_TRUE(ProblemSpec::make(0.2, 0.3, 0.5).inconsistency_regime());
  EXPECT_FALSE(ProblemSpec::make(0.2, 0.4, 0.5).inconsistency_regime());
}

TEST(SampleExplicit, EmptySample) {
  const ExplicitSample s = sample_explicit(kSpec, 0, 4, 1);
  EXPECT_EQ(s.m, 0u);
  EXPECT_EQ(s.m_hard(), 0u);
  EXPECT_TRUE(s.labels.empty());
  EXPECT_EQ(s.error_count(0), 0u);
  EXPECT_EQ(s.error_count(3), 0u);
}

TEST(SampleExplicit, AlwaysWrongBadClassifiers) {
  const ProblemSpec spec = ProblemSpec::make(0.2, 1.0, 1.0);
  const ExplicitSample s = sample_explicit(spec, 300, 5, 2);
  EXPECT_EQ(s.m_hard(), 300u);
  for (std::uint64_t j = 1; j <= 5; ++j) EXPECT_EQ(s.bad_error_count(j), 300u);
}

TEST(SampleExplicit, HardFractionWithinFourSigma) {
  const std::uint64_t m = 100000;
  for (const auto& spec : {ProblemSpec::make(0.2, 0.3, 0.5), ProblemSpec::make(0.1, 0.15, 0.5),
                           ProblemSpec::make(0.2, 0.3, 0.55), ProblemSpec::make(0.05, 0.1, 0.9),
                           ProblemSpec::make(0.3, 0.45, 0.6)}) {
    const ExplicitSample s = sample_explicit(spec, m, 1, 42);
    const double frac = static_cast<double>(s.m_hard()) / m;
    EXPECT_NEAR(frac, spec.p_hard(), 4.0 * proportion_sigma(spec.p_hard(), m));
    const double bad = static_cast<double>(s.bad_error_count(1)) / m;
    EXPECT_NEAR(bad, spec.mu_prime, 4.0 * proportion_sigma(spec.mu_prime, m));
  }
}

TEST(SampleExplicit, BadClassifiersNeverErrOnEasyExamples) {
  const ExplicitSample s = sample_explicit(kSpec, 500, 16, 3);
  for (std::uint64_t j = 1; j <= 16; ++j) {
    std::uint64_t manual = 0;
    for (std::size_t col = 0; col < s.m_hard(); ++col) manual += s.bad_error(j, col);
    EXPECT_EQ(manual, s.bad_error_count(j));
  }
  std::uint64_t hard = 0;
  for (auto h : s.hard) hard += h;
  EXPECT_EQ(hard, s.m_hard());
}

TEST(SampleExplicit, FreshBatchGoodErrorWithinFourSigma) {
  const std::uint64_t m = 1000000;
  const ExplicitSample s = fresh_test_batch(kSpec, m, 9);
  EXPECT_TRUE(s.test_data);
  EXPECT_NEAR(static_cast<double>(s.good_error_count()) / m, 0.2, 4.0 * proportion_sigma(0.2, m));
  EXPECT_DOUBLE_EQ(true_error(kSpec, 0), 0.2);
  EXPECT_DOUBLE_EQ(true_error(kSpec, 7), 0.3);
}

TEST(SampleExplicit, BitReproducible) {
  const ExplicitSample a = sample_explicit(kSpec, 777, 100, 123456789);
  const ExplicitSample b = sample_explicit(kSpec, 777, 100, 123456789);
  EXPECT_EQ(checksum(a), checksum(b));
  EXPECT_EQ(checksum(a), 0x1e151573a37e28a2ULL) << std::hex << checksum(a);
  EXPECT_NE(checksum(a), checksum(sample_explicit(kSpec, 777, 100, 123456788)));
}

TEST(SampleExplicit, SwapRowsExchangesErrorCounts) {
  ExplicitSample s = sample_explicit(kSpec, 200, 8, 4);
  const auto a = s.bad_error_count(2), b = s.bad_error_count(7);
  s.swap_rows(2, 7);
  EXPECT_EQ(s.bad_error_count(2), b);
  EXPECT_EQ(s.bad_error_count(7), a);
  EXPECT_THROW(s.swap_rows(0, 3), std::out_of_range);
}

TEST(SampleAggregated, EmptySampleHasEverythingAtZero) {
  const AggregatedSample a = sample_aggregated(kSpec, 0, ClassifierPrior::dyadic_block(), 10, 1);
  ASSERT_EQ(a.blocks.size(), 10u);
  for (const BlockCells& b : a.blocks) {
    ASSERT_EQ(b.cells.size(), 1u);
    EXPECT_EQ(b.cells[0].h, 0u);
    EXPECT_EQ(b.cells[0].count, std::uint64_t{1} << (b.block - 1));
  }
}

TEST(SampleAggregated, DeterministicFlipsFillTheLastCell) {
  const ProblemSpec spec = ProblemSpec::make(0.2, 1.0, 1.0);
  const AggregatedSample a = sample_aggregated(spec, 50, ClassifierPrior::dyadic_block(), 0, 5);
  EXPECT_EQ(a.m_hard, 50u);
  EXPECT_EQ(a.n_max, 64u);
  for (const BlockCells& b : a.blocks) {
    ASSERT_EQ(b.cells.size() + b.ranges.size(), 1u) << b.block;
    if (!b.cells.empty()) {
      EXPECT_EQ(b.cells[0].h, 50u);
      EXPECT_NEAR(b.cells[0].log2_count, b.block - 1.0, 1e-12);
    } else {
      EXPECT_EQ(b.ranges[0].h_lo, 50u);
    }
  }
}

TEST(SampleAggregated, BlocksHoldTheirPopulation) {
  for (std::uint64_t m : {16u, 512u, 4096u}) {
    const AggregatedSample a = sample_aggregated(kSpec, m, ClassifierPrior::dyadic_block(), 0, m);
    for (const BlockCells& b : a.blocks) {
      long double total = 0.0L;
      std::uint64_t exact = 0;
      bool all_exact = b.ranges.empty();
      for (const SampledCell& c : b.cells) {
        if (c.exact) exact += c.count;
        else all_exact = false;
        total += std::exp2(static_cast<long double>(c.log2_count));
      }
      for (const DetRange& r : b.ranges)
        for (std::uint32_t h = r.h_lo; h <= r.h_hi; ++h)
          total += std::exp2(static_cast<long double>(a.log2_range_count(b.block, h)));
      if (b.block <= 54 && all_exact) {
        EXPECT_EQ(exact, std::uint64_t{1} << (b.block - 1)) << "m=" << m << " block " << b.block;
      } else {
        EXPECT_NEAR(static_cast<double>(std::log2(total)), b.block - 1.0, 1e-9)
            << "m=" << m << " block " << b.block;
      }
      for (std::size_t i = 1; i < b.cells.size(); ++i) EXPECT_LT(b.cells[i - 1].h, b.cells[i].h);
    }
  }
}

TEST(SampleAggregated, SharesExampleStatisticsWithExplicit) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const ExplicitSample e = sample_explicit(kSpec, 40, 3, seed);
    const AggregatedSample a = sample_aggregated(kSpec, 40, ClassifierPrior::dyadic_block(), 4, seed);
    EXPECT_EQ(e.m_hard(), a.m_hard);
    EXPECT_EQ(e.good_error_count(), a.good_error_count);
  }
}

TEST(SampleAggregated, BlockMinimaMatchExplicitInDistribution) {
  const std::uint64_t m = 8, seeds = 10000;
  std::map<std::int64_t, std::uint64_t> ex, ag;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    const auto em = block_minima(sample_explicit(kSpec, m, 63, 2 * s));
    const auto am = block_minima(
        sample_aggregated(kSpec, m, ClassifierPrior::dyadic_block(), 6, 2 * s + 1));
    ASSERT_EQ(em.size(), 6u);
    ASSERT_EQ(am.size(), 6u);
    for (std::size_t n = 0; n < 6; ++n) {
      ++ex[static_cast<std::int64_t>(n * 16 + em[n])];
      ++ag[static_cast<std::int64_t>(n * 16 + am[n])];
    }
  }
  EXPECT_GT(chi_square_two_sample(ex, ag).p_value, 0.01);
}

TEST(SampleAggregated, ZeroErrorBlockMatchesExplicitInDistribution) {
  const std::uint64_t m = 16, seeds = 3000;
  std::map<std::int64_t, std::uint64_t> ex, ag;
  const auto first_zero = [](const std::vector<std::uint64_t>& mins) {
    for (std::size_t n = 0; n < mins.size(); ++n)
      if (mins[n] == 0) return static_cast<std::int64_t>(n + 1);
    return std::int64_t{0};
  };
  for (std::uint64_t s = 0; s < seeds; ++s) {
    ++ex[first_zero(block_minima(sample_explicit(kSpec, m, 4095, 2 * s)))];
    ++ag[first_zero(block_minima(
        sample_aggregated(kSpec, m, ClassifierPrior::dyadic_block(), 12, 2 * s + 1)))];
  }
  EXPECT_GT(chi_square_two_sample(ex, ag).p_value, 0.01);
}

TEST(SampleAggregated, NmaxDefaultAndWarning) {
  const AggregatedSample a = sample_aggregated(kSpec, 512, ClassifierPrior::dyadic_block(), 0, 3);
  EXPECT_FALSE(a.n_max_warning);
  EXPECT_GT(a.expected_zero_error, 1e3);
  const std::uint32_t n = default_n_max(kSpec, a.m_hard);
  EXPECT_EQ(a.n_max, n);
  const double p0 = std::pow(0.5, static_cast<double>(a.m_hard));
  EXPECT_GT((std::ldexp(1.0, n) - 1.0) * p0, 1e3);
  EXPECT_LE((std::ldexp(1.0, n - 1) - 1.0) * p0, 1e3);
  const AggregatedSample small = sample_aggregated(kSpec, 512, ClassifierPrior::dyadic_block(), 5, 3);
  EXPECT_TRUE(small.n_max_warning);
}

TEST(KOfM, Examples) {
  const KOfM k16 = k_of_m(kSpec, 16);
  EXPECT_DOUBLE_EQ(k16.epsilon, 0.5);
  EXPECT_NEAR(k16.log2_k, 3.0 + 17.6, 1e-12);
  ASSERT_TRUE(k16.k.has_value());
  EXPECT_NEAR(static_cast<double>(*k16.k), 1.59e6, 0.01e6);

  const KOfM k1 = k_of_m(kSpec, 1);
  EXPECT_EQ(*k1.k, static_cast<std::uint64_t>(std::ceil(2.0 / std::pow(0.5, 1.6))));

  EXPECT_THROW(k_of_m(ProblemSpec::make(0.2, 1.0, 1.0), 10), std::domain_error);
}

TEST(KOfM, LargeMAgainstHighPrecision) {
  using big = boost::multiprecision::cpp_bin_float_50;
  for (std::uint64_t m : {256u, 4096u, 65536u}) {
    const big md = m;
    const big eps = pow(md, big(-0.25));
    const big log2k = log(2 * md * eps * eps) / log(big(2)) -
                      md * (big(6) / 10 + eps) * log(big(1) / 2) / log(big(2));
    const KOfM k = k_of_m(kSpec, m);
    EXPECT_NEAR(k.log2_k, log2k.convert_to<double>(), 1e-9 * k.log2_k);
    EXPECT_EQ(k.ceil_log2_k, static_cast<std::uint64_t>(ceil(log2k).convert_to<double>()));
    // log2 k = m (p_hard + eps) + 1/2 log2 m + 1.
    EXPECT_NEAR(k.log2_k - static_cast<double>(m) * (0.6 + k.epsilon) - 0.5 * std::log2(double(m)),
                1.0, 1e-9);
  }
}

TEST(Exchangeability, PermutingRowsInsideABlockKeepsSelections) {
  const auto prior = ClassifierPrior::dyadic_block();
  const EvidenceTable table(24, ThetaPrior::uniform());
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    ExplicitSample s = sample_explicit(kSpec, 24, 255, seed);
    const HypothesisSet before = make_hypotheses(s, prior);
    s.swap_rows(130, 200);
    s.swap_rows(5, 7);
    const HypothesisSet after = make_hypotheses(s, prior);
    for (Algorithm a : {Algorithm::kMap, Algorithm::kSmap, Algorithm::kMdl, Algorithm::kOrb}) {
      const LearnerResult x = select(a, before, table), y = select(a, after, table);
      EXPECT_EQ(x.selected_good, y.selected_good);
      EXPECT_EQ(x.block, y.block);
      EXPECT_EQ(x.errors, y.errors);
      EXPECT_DOUBLE_EQ(x.score, y.score);
    }
  }
}
