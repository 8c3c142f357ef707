#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "misspec/inference.hpp"
#include "misspec/numerics.hpp"
#include "misspec/rng.hpp"
#include "oracles.hpp"

using namespace misspec;

TEST(Entropy, Examples) {
  EXPECT_EQ(binary_entropy(0.0), 0.0);
  EXPECT_EQ(binary_entropy(1.0), 0.0);
  EXPECT_DOUBLE_EQ(binary_entropy(0.5), 1.0);
  EXPECT_NEAR(binary_entropy(0.2), 0.7219280948873623, 1e-15);
  EXPECT_NEAR(0.5 * binary_entropy(0.2) - 0.2, 0.1609640474436812, 1e-15);
}

TEST(Entropy, IncreasingAndSymmetric) {
  double prev = -1.0;
  for (int i = 0; i < 1000; ++i) {
    const double mu = 0.5 * i / 1000.0;
    const double h = binary_entropy(mu);
    EXPECT_GT(h, prev);
    prev = h;
    EXPECT_NEAR(h, binary_entropy(1.0 - mu), 1e-14);
    EXPECT_NEAR(h, oracle::entropy_bits(mu), 1e-14);
  }
}

TEST(Likelihood, Examples) {
  EXPECT_EQ(log_likelihood(0, 0, 0.0), 0.0);
  EXPECT_EQ(log_likelihood(0, 5, 0.0), 0.0);
  EXPECT_EQ(log_likelihood(5, 5, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(log_likelihood(1, 2, 0.5), -2.0);
  EXPECT_NEAR(log_likelihood(3, 10, 0.3), 3 * std::log2(0.3) + 7 * std::log2(0.7), 1e-13);
  EXPECT_EQ(log_likelihood(1, 5, 0.0), -std::numeric_limits<double>::infinity());
}

TEST(Likelihood, ProfileExamples) {
  EXPECT_EQ(profile_loglik(0, 10), 0.0);
  EXPECT_EQ(profile_loglik(10, 10), 0.0);
  EXPECT_DOUBLE_EQ(profile_loglik(50, 100), -100.0);
  EXPECT_NEAR(profile_loglik(3, 10), -8.8129, 1e-4);
}

TEST(Likelihood, ProfileIsTheMaximum) {
  for (std::uint64_t m : {7u, 40u, 333u})
    for (std::uint64_t a = 0; a <= m; ++a) {
      const double best = profile_loglik(a, m);
      for (int i = 1; i < 100; ++i) EXPECT_LE(log_likelihood(a, m, i / 100.0), best + 1e-9);
    }
}

TEST(Binomial, Examples) {
  EXPECT_NEAR(log2_binomial(4, 2), std::log2(6.0), 1e-12);
  EXPECT_EQ(log2_binomial(9, 0), 0.0);
  EXPECT_EQ(log2_binomial(9, 9), 0.0);
  const double exact = oracle::log2_big(oracle::choose(100, 20));
  EXPECT_NEAR(log2_binomial(100, 20), exact, 1e-9 * exact);
}

TEST(Binomial, MatchesBigIntegers) {
  for (unsigned m = 1; m <= 1000; m += 37)
    for (unsigned a = 1; a < m; a += 1 + m / 20) {
      const double exact = oracle::log2_big(oracle::choose(m, a));
      EXPECT_NEAR(log2_binomial(m, a), exact, 1e-9 * exact) << m << " " << a;
    }
}

TEST(TwoPartCode, Examples) {
  const auto p = ClassifierPrior::dyadic_block();
  EXPECT_NEAR(two_part_codelength(p, 1, 2, 4), 2.0 + std::log2(6.0), 1e-12);
  EXPECT_NEAR(two_part_codelength(p, 1, 2, 4), 4.585, 1e-3);
  EXPECT_DOUBLE_EQ(two_part_codelength(p, 9, 0, 50), -p.log2_prior(9));
}

TEST(TwoPartCode, StirlingSandwich) {
  std::uint64_t violations = 0;
  for (std::uint64_t m = 10; m <= 2000; ++m) {
    const double slack = 0.5 * std::log2(static_cast<double>(m)) + 2.0;
    for (std::uint64_t a = 1; a < m; ++a)
      if (std::fabs(log2_binomial(m, a) + profile_loglik(a, m)) > slack) ++violations;
  }
  EXPECT_EQ(violations, 0u);
}

TEST(Lemma1, Applicability) {
  EXPECT_TRUE(lemma1_applies(30, 100, 0.1));
  EXPECT_TRUE(lemma1_applies(50, 100, 0.1));
  EXPECT_FALSE(lemma1_applies(51, 100, 0.1));
  EXPECT_FALSE(lemma1_applies(20, 100, 0.1));  // 0.2 = alpha + 1/sqrt(m)
  EXPECT_THROW(lemma1_sandwich(10, 100, 1.0, 0.1), std::domain_error);
  EXPECT_THROW(lemma1_sandwich(30, 100, 0.0, 0.1), std::domain_error);
}

TEST(Lemma1, ExamplesContainTheEvidence) {
  const ThetaPrior uniform = ThetaPrior::uniform();
  for (auto [a, m] : {std::pair<std::uint64_t, std::uint64_t>{30, 100}, {120, 400}, {50, 100}}) {
    const SandwichBounds b = lemma1_sandwich(a, m, 1.0, 0.1);
    // Closed form: integral theta^a (1-theta)^(m-a) = 1 / ((m+1) C(m, a)).
    const double exact = std::log2(static_cast<double>(m + 1)) +
                         oracle::log2_big(oracle::choose(static_cast<unsigned>(m),
                                                         static_cast<unsigned>(a)));
    EXPECT_NEAR(-log_evidence_theta(uniform, a, m), exact, 1e-9 * exact);
    EXPECT_LE(b.lower, exact);
    EXPECT_GE(b.upper, exact);
    EXPECT_NEAR(b.upper - b.lower,
                0.5 * std::log2(double(m)) + 0.5 / (0.1 * 0.9) / std::log(2.0), 1e-12);
  }
}

TEST(Lemma1, GridContainment) {
  const ThetaPrior uniform = ThetaPrior::uniform();
  for (std::uint64_t m = 50; m <= 1000; m += 50)
    for (double alpha : {0.05, 0.1, 0.2})
      for (std::uint64_t a = 0; a <= m; ++a) {
        if (!lemma1_applies(a, m, alpha)) continue;
        const SandwichBounds b = lemma1_sandwich(a, m, 1.0, alpha);
        const double ev = -log_evidence_theta(uniform, a, m);
        EXPECT_LE(b.lower, ev + 1e-9);
        EXPECT_GE(b.upper, ev - 1e-9);
      }
}

TEST(Lemma1, EvidenceNeverExceedsTheMaximisedLikelihood) {
  const ThetaPrior priors[] = {ThetaPrior::uniform(), ThetaPrior::beta(2.0, 5.0),
                               ThetaPrior::beta(0.5, 0.5, 0.1)};
  for (const ThetaPrior& prior : priors)
    for (std::uint64_t m : {1u, 2u, 13u, 100u, 999u})
      for (std::uint64_t a = 0; a <= m; ++a)
        EXPECT_GE(-log_evidence_theta(prior, a, m), -profile_loglik(a, m) - 1e-9)
            << prior.name() << " " << a << "/" << m;
}

TEST(EvidenceTable, PosteriorWeightsSumToOne) {
  const EvidenceTable t(200, ThetaPrior::uniform());
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> prior;
    std::vector<std::uint64_t> errors;
    for (int i = 0; i < 50; ++i) {
      prior.push_back(-1.0 - 40.0 * rng.uniform());
      errors.push_back(rng.next() % 201);
    }
    double log2_z = 0.0;
    const auto w = t.posterior_weights(prior, errors, &log2_z);
    double sum = 0.0;
    for (double x : w) sum += x;
    EXPECT_NEAR(sum, 1.0, 1e-9);
    std::vector<double> terms;
    for (std::size_t i = 0; i < prior.size(); ++i) terms.push_back(prior[i] - t.evidence_bits(errors[i]));
    EXPECT_NEAR(log2_z, log2_sum(terms), 1e-9);
  }
}

TEST(EvidenceTable, UniformScoresHaveClosedForms) {
  const std::uint64_t m = 300;
  const EvidenceTable t(m, ThetaPrior::uniform());
  for (std::uint64_t a = 0; a <= m; ++a) {
    EXPECT_NEAR(t.map_bits(a), -profile_loglik(a, m), 1e-12);
    EXPECT_NEAR(t.evidence_bits(a), std::log2(double(m + 1)) + log2_binomial(m, a), 1e-8);
    EXPECT_NEAR(t.posterior_mean(a), (a + 1.0) / (m + 2.0), 1e-12);
  }
}

// With a uniform theta prior the sMAP data cost is log2((m+1) C(m,a)), so the
// MDL-sMAP gap is log2(m+1) for every classifier: inside the half-log-plus-4
// allowance only up to m = 253.
TEST(EvidenceTable, MdlSmapGapIsLogOfMPlusOne) {
  for (std::uint64_t m : {1u, 10u, 100u, 253u, 254u, 2000u}) {
    const EvidenceTable t(m, ThetaPrior::uniform());
    const double allowance = 0.5 * std::log2(double(m)) + 4.0;
    for (std::uint64_t a = 0; a <= m; ++a) {
      const double gap = t.evidence_bits(a) - t.codelength_bits(a);
      EXPECT_NEAR(gap, std::log2(double(m + 1)), 1e-8);
      if (m <= 253) {
        EXPECT_LE(gap, allowance);
      }
    }
  }
  EXPECT_GT(std::log2(255.0), 0.5 * std::log2(254.0) + 4.0);
}

TEST(KlDelta, ZeroWhenWellSpecified) {
  Rng rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    const ToyProblem toy = ToyProblem::well_specified(rng, 10, 8, 3, 0.15 + 0.05 * rep);
    EXPECT_NEAR(kl_delta(toy, 3, 0.15 + 0.05 * rep), 0.0, 1e-12);
    EXPECT_NEAR(toy.true_error(3), 0.15 + 0.05 * rep, 1e-12);
  }
}

TEST(KlDelta, InfiniteAtDegenerateTheta) {
  Rng rng(12);
  const ToyProblem toy = ToyProblem::random(rng, 8, 4);
  EXPECT_EQ(kl_delta(toy, 0, 0.0), std::numeric_limits<double>::infinity());
  EXPECT_EQ(kl_delta(toy, 0, 1.0), std::numeric_limits<double>::infinity());
  EXPECT_THROW(kl_delta(toy, 0, 1.5), std::domain_error);
}

// KL depends on theta only through e_D(c), and is minimised at theta = e_D(c).
TEST(KlDelta, ThetaArgminIsTheTrueError) {
  Rng rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    const ToyProblem toy = ToyProblem::random(rng, 12, 6);
    for (std::size_t c = 0; c < 6; ++c) {
      double best = std::numeric_limits<double>::infinity();
      double arg = 0.0;
      for (int i = 1; i <= 99; ++i) {
        const double kl = kl_delta(toy, c, i / 100.0);
        if (kl < best) {
          best = kl;
          arg = i / 100.0;
        }
      }
      EXPECT_NEAR(arg, toy.true_error(c), 0.01 + 1e-12);
      EXPECT_LE(kl_delta(toy, c, toy.true_error(c)), best + 1e-12);
      EXPECT_NEAR(kl_delta(toy, c, 0.3) - kl_delta(toy, c, 0.4),
                  -toy.true_error(c) * std::log2(0.3 / 0.4) -
                      (1 - toy.true_error(c)) * std::log2(0.7 / 0.6),
                  1e-12);
    }
  }
}

TEST(KlDelta, BaseConversion) {
  Rng rng(14);
  const ToyProblem toy = ToyProblem::random(rng, 6, 3);
  EXPECT_NEAR(kl_delta(toy, 1, 0.3, LogBase::kNats) / std::log(2.0), kl_delta(toy, 1, 0.3), 1e-14);
}

TEST(Logistic, Examples) {
  for (int c : {0, 1})
    for (int y : {0, 1}) {
      const auto p = logistic_equiv_check(0.5, c, y);
      EXPECT_DOUBLE_EQ(p.direct, 0.5);
      EXPECT_NEAR(p.logit, 0.5, 1e-15);
      EXPECT_NEAR(p.symmetric, 0.5, 1e-15);
    }
  const auto hit = logistic_equiv_check(0.2, 1, 1);
  EXPECT_NEAR(hit.direct, 0.8, 1e-15);
  EXPECT_NEAR(hit.logit, 0.8, 1e-12);
  EXPECT_NEAR(hit.symmetric, 0.8, 1e-12);
  const auto miss = logistic_equiv_check(0.2, 1, 0);
  EXPECT_NEAR(miss.logit, 0.2, 1e-12);
  EXPECT_NEAR(miss.symmetric, 0.2, 1e-12);
  EXPECT_THROW(logistic_equiv_check(0.0, 1, 1), std::domain_error);
  EXPECT_THROW(logistic_equiv_check(0.3, 2, 1), std::invalid_argument);
}

TEST(Logistic, ThreeFormsAgreeOnAGrid) {
  for (int i = 1; i < 1000; ++i) {
    const double theta = i / 1000.0;
    for (int c : {0, 1})
      for (int y : {0, 1}) {
        const auto p = logistic_equiv_check(theta, c, y);
        EXPECT_NEAR(p.logit, p.direct, 1e-12);
        EXPECT_NEAR(p.symmetric, p.direct, 1e-12);
      }
  }
}
