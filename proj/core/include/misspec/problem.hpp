#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "misspec/priors.hpp"

namespace misspec {

// The adversarial distribution D: c_0 errs with probability mu on every
// example; bad classifiers c_j (j >= 1) are always right on easy examples and
// err independently with probability mu_hard on hard ones.
struct ProblemSpec {
  double mu = 0.2;
  double mu_prime = 0.3;
  double mu_hard = 0.5;

  // Throws std::invalid_argument unless 0 < mu < 1, mu <= mu_prime <= 1,
  // 0.5 <= mu_hard <= 1 and mu_prime <= mu_hard (so that p_hard <= 1).
  // mu_prime = mu_hard = 1 is the degenerate "always wrong" construction.
  static ProblemSpec make(double mu, double mu_prime, double mu_hard);
  void validate() const;

  double p_hard() const noexcept { return mu_prime / mu_hard; }
  // mu_prime < H(mu)/2, H in bits.
  bool inconsistency_regime() const;
};

// One draw S ~ D^m with K bad classifiers stored explicitly.
struct ExplicitSample {
  std::uint64_t m = 0;
  std::uint64_t num_bad = 0;  // K; bad classifiers are indices 1..K
  double mu_hard = 0.5;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> hard;
  std::vector<std::uint8_t> good_error;
  std::vector<std::uint32_t> hard_positions;  // hard column -> example index
  std::size_t words_per_row = 0;
  std::vector<std::uint64_t> bad_bits;  // K rows over hard columns
  bool test_data = false;

  std::uint64_t m_hard() const noexcept { return hard_positions.size(); }
  std::uint64_t good_error_count() const noexcept;
  // Error bit of classifier j >= 1 on hard column `col`.
  bool bad_error(std::uint64_t j, std::size_t col) const noexcept {
    return (bad_bits[(j - 1) * words_per_row + col / 64] >> (col % 64)) & 1U;
  }
  std::uint64_t bad_error_count(std::uint64_t j) const noexcept;
  // Error count of any classifier, c_0 included.
  std::uint64_t error_count(std::uint64_t j) const noexcept {
    return j == 0 ? good_error_count() : bad_error_count(j);
  }
  // Swaps the rows of two bad classifiers (used for exchangeability tests).
  void swap_rows(std::uint64_t i, std::uint64_t j);
};

// A cell of bad classifiers sharing block and hard-error count h, with
// a sampled count.
struct SampledCell {
  std::uint32_t h = 0;
  std::uint64_t count = 0;  // valid when `exact`
  double log2_count = 0.0;
  bool exact = true;
  // Position of the lowest-index member inside its block, in [0, 1).
  double min_offset_frac = 0.0;
};

// Consecutive cells whose counts are taken at their expectation
// 2^{n-1} * Binomial(h; m_hard, mu_hard).
struct DetRange {
  std::uint32_t h_lo = 0;
  std::uint32_t h_hi = 0;
};

struct BlockCells {
  std::uint32_t block = 0;
  std::vector<SampledCell> cells;  // sorted by h
  std::vector<DetRange> ranges;
};

// The same draw, kept as per-block histograms over hard-error counts.
struct AggregatedSample {
  std::uint64_t m = 0;
  std::uint64_t m_hard = 0;
  std::uint64_t good_error_count = 0;
  double mu_hard = 0.5;
  std::uint32_t n_max = 0;
  std::vector<BlockCells> blocks;   // blocks[n-1] describes block n
  std::vector<double> log2_pmf;     // log2 Binomial(h; m_hard, mu_hard)
  double expected_zero_error = 0.0;  // E[#h=0 classifiers in blocks <= n_max]
  bool n_max_warning = false;        // P(no such classifier) > 1e-6

  double log2_range_count(std::uint32_t block, std::uint32_t h) const {
    return static_cast<double>(block) - 1.0 + log2_pmf[h];
  }
};

// Aggregated sampling thresholds. Cells with expected count at least
// `deterministic_count` use the rounded expectation; runs of cells below
// `rare_count` are drawn with a single Poisson variate.
struct AggregationPolicy {
  double deterministic_count = 1e4;
  double rare_count = 1e-3;
  double zero_error_target = 1e3;
};

ExplicitSample sample_explicit(const ProblemSpec& spec, std::uint64_t m, std::uint64_t num_bad,
                               std::uint64_t seed);

// n_max = 0 selects the default: the smallest n such that blocks <= n hold
// more than `policy.zero_error_target` zero-error classifiers in expectation.
AggregatedSample sample_aggregated(const ProblemSpec& spec, std::uint64_t m,
                                   const ClassifierPrior& prior, std::uint32_t n_max,
                                   std::uint64_t seed, const AggregationPolicy& policy = {});

std::uint32_t default_n_max(const ProblemSpec& spec, std::uint64_t m_hard,
                            const AggregationPolicy& policy = {});

struct KOfM {
  double epsilon = 0.0;
  double log2_k = 0.0;
  std::uint64_t ceil_log2_k = 0;
  std::optional<std::uint64_t> k;  // only when it fits in 64 bits
};

// k(m) = ceil(2 m eps^2 / (1 - mu_hard)^{m (p_hard + eps)}), eps = m^{-1/4}.
KOfM k_of_m(const ProblemSpec& spec, std::uint64_t m);

double true_error(const ProblemSpec& spec, std::uint64_t j);

// Fresh labelled examples for generalisation estimates; never used for fitting.
ExplicitSample fresh_test_batch(const ProblemSpec& spec, std::uint64_t m_test, std::uint64_t seed,
                                std::uint64_t num_bad = 0);

}  // namespace misspec
