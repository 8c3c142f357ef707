#include "misspec/problem.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <stdexcept>

#include "misspec/inference.hpp"
#include "misspec/numerics.hpp"
#include "misspec/rng.hpp"

namespace misspec {
namespace {

constexpr std::uint64_t kExampleStream = 0;
constexpr std::uint64_t kBadStream = 1;
constexpr std::uint64_t kBlockStreamBase = 16;
// Blocks whose population fits a double mantissa are split exactly.
constexpr std::uint32_t kExactPopulationBits = 53;

Rng stream_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(seed, StreamKey{0, 0, stream});
}

struct ExampleTotals {
  std::uint64_t m_hard = 0;
  std::uint64_t good_errors = 0;
};

// Label, hardness and c_0 error for each example, in that order; both samplers
// consume this stream identically so paired seeds agree on these statistics.
ExampleTotals draw_examples(const ProblemSpec& spec, std::uint64_t m, std::uint64_t seed,
                            ExplicitSample* out) {
  Rng rng = stream_rng(seed, kExampleStream);
  const double p_hard = spec.p_hard();
  ExampleTotals t;
  for (std::uint64_t i = 0; i < m; ++i) {
    const auto y = static_cast<std::uint8_t>(rng.next() >> 63);
    const bool hard = rng.bernoulli(p_hard);
    const bool good_err = rng.bernoulli(spec.mu);
    t.m_hard += hard;
    t.good_errors += good_err;
    if (out != nullptr) {
      out->labels.push_back(y);
      out->hard.push_back(hard);
      out->good_error.push_back(good_err);
      if (hard) out->hard_positions.push_back(static_cast<std::uint32_t>(i));
    }
  }
  return t;
}

double min_offset_fraction(Rng& rng, std::uint64_t count) {
  if (count == 0) return 0.0;
  // Minimum of `count` uniforms: 1 - U^{1/count}.
  return -std::expm1(std::log(rng.uniform_open()) / static_cast<double>(count));
}

SampledCell make_cell(std::uint32_t h, std::uint64_t count, Rng& rng) {
  SampledCell c;
  c.h = h;
  c.count = count;
  c.log2_count = std::log2(static_cast<double>(count));
  c.exact = true;
  c.min_offset_frac = min_offset_fraction(rng, count);
  return c;
}

struct CellTables {
  std::vector<double> log2_cdf;
  std::vector<double> log2_sf;
  std::uint32_t mode = 0;
};

CellTables cumulative_tables(const std::vector<double>& log2_pmf) {
  CellTables t;
  const std::size_t n = log2_pmf.size();
  t.log2_cdf.resize(n);
  t.log2_sf.resize(n);
  double acc = kNegInf;
  for (std::size_t h = 0; h < n; ++h) t.log2_cdf[h] = acc = log2_add(acc, log2_pmf[h]);
  acc = kNegInf;
  for (std::size_t h = n; h-- > 0;) t.log2_sf[h] = acc = log2_add(acc, log2_pmf[h]);
  t.mode = static_cast<std::uint32_t>(std::max_element(log2_pmf.begin(), log2_pmf.end()) -
                                      log2_pmf.begin());
  return t;
}

void sample_small_block(BlockCells& block, const AggregatedSample& s, const CellTables& tables,
                        const AggregationPolicy& policy, Rng& rng) {
  std::uint64_t remaining = std::uint64_t{1} << (block.block - 1);
  const auto last = static_cast<std::uint32_t>(s.m_hard);
  for (std::uint32_t h = 0; h <= last && remaining > 0; ++h) {
    std::uint64_t count;
    if (h == last) {
      count = remaining;
    } else {
      const double q = std::clamp(std::exp2(s.log2_pmf[h] - tables.log2_sf[h]), 0.0, 1.0);
      const double mean = static_cast<double>(remaining) * q;
      if (mean >= policy.deterministic_count) {
        count = std::min<std::uint64_t>(remaining, static_cast<std::uint64_t>(std::llround(mean)));
      } else {
        count = rng.binomial(remaining, q);
      }
    }
    if (count > 0) block.cells.push_back(make_cell(h, count, rng));
    remaining -= count;
  }
}

void sample_large_block(BlockCells& block, const AggregatedSample& s, const CellTables& tables,
                        const AggregationPolicy& policy, Rng& rng) {
  const double log2_pop = static_cast<double>(block.block) - 1.0;
  const double det = std::log2(policy.deterministic_count);
  const double rare = std::log2(policy.rare_count);
  const auto last = static_cast<std::uint32_t>(s.m_hard);
  auto log2_lambda = [&](std::uint32_t h) { return log2_pop + s.log2_pmf[h]; };

  // The pmf is unimodal, so {lambda >= c} is an interval around the mode for
  // any c; its ends are found by bisection.
  const std::uint32_t mode = tables.mode;
  auto first_at_least = [&](std::uint32_t lo, std::uint32_t hi, double c) {
    while (lo < hi) {  // increasing part, returns hi if none
      const std::uint32_t mid = lo + (hi - lo) / 2;
      if (log2_lambda(mid) >= c) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    return lo;
  };
  auto last_at_least = [&](std::uint32_t lo, std::uint32_t hi, double c) {
    while (lo < hi) {  // decreasing part, lambda(lo) >= c assumed
      const std::uint32_t mid = lo + (hi - lo + 1) / 2;
      if (log2_lambda(mid) >= c) {
        lo = mid;
      } else {
        hi = mid - 1;
      }
    }
    return lo;
  };

  std::uint32_t prefix_end = last + 1;  // cells [0, prefix_end) are rare
  std::uint32_t suffix_begin = last + 1;  // cells [suffix_begin, last] are rare
  std::uint32_t det_lo = 1, det_hi = 0;
  if (log2_lambda(mode) >= rare) {
    prefix_end = first_at_least(0, mode, rare);
    suffix_begin = last_at_least(mode, last, rare) + 1;
    if (log2_lambda(mode) >= det) {
      det_lo = first_at_least(prefix_end, mode, det);
      det_hi = last_at_least(mode, suffix_begin - 1, det);
      block.ranges.push_back({det_lo, det_hi});
    }
  }

  std::map<std::uint32_t, std::uint64_t> counts;
  if (prefix_end > 0) {
    const double log2_mass = tables.log2_cdf[prefix_end - 1];
    const std::uint64_t n = rng.poisson(std::exp2(log2_pop + log2_mass));
    for (std::uint64_t i = 0; i < n; ++i) {
      const double target = std::log2(rng.uniform_open()) + log2_mass;
      const auto it = std::lower_bound(tables.log2_cdf.begin(),
                                       tables.log2_cdf.begin() + prefix_end, target);
      const auto h = static_cast<std::uint32_t>(
          std::min<std::ptrdiff_t>(it - tables.log2_cdf.begin(), prefix_end - 1));
      ++counts[h];
    }
  }
  for (std::uint32_t h = prefix_end; h < suffix_begin; ++h) {
    if (h == det_lo && det_lo <= det_hi) {
      h = det_hi;
      continue;
    }
    const std::uint64_t c = rng.poisson(std::exp2(log2_lambda(h)));
    if (c > 0) counts[h] += c;
  }
  if (suffix_begin <= last) {
    const double log2_mass = tables.log2_sf[suffix_begin];
    const std::uint64_t n = rng.poisson(std::exp2(log2_pop + log2_mass));
    for (std::uint64_t i = 0; i < n; ++i) {
      const double target = std::log2(rng.uniform_open()) + log2_mass;
      // Largest h in the suffix with sf(h) >= target; sf is decreasing.
      std::uint32_t lo = suffix_begin, hi = last;
      while (lo < hi) {
        const std::uint32_t mid = lo + (hi - lo + 1) / 2;
        if (tables.log2_sf[mid] >= target) {
          lo = mid;
        } else {
          hi = mid - 1;
        }
      }
      ++counts[lo];
    }
  }
  for (const auto& [h, c] : counts) block.cells.push_back(make_cell(h, c, rng));
}

}  // namespace

ProblemSpec ProblemSpec::make(double mu, double mu_prime, double mu_hard) {
  ProblemSpec s{mu, mu_prime, mu_hard};
  s.validate();
  return s;
}

void ProblemSpec::validate() const {
  if (!(mu > 0.0 && mu < 1.0 && mu <= mu_prime && mu_prime <= 1.0))
    throw std::invalid_argument("problem spec: need 0 < mu < 1 and mu <= mu_prime <= 1");
  if (!(mu_hard >= 0.5 && mu_hard <= 1.0))
    throw std::invalid_argument("problem spec: need 0.5 <= mu_hard <= 1");
  if (p_hard() > 1.0) throw std::invalid_argument("problem spec: p_hard = mu_prime/mu_hard > 1");
}

bool ProblemSpec::inconsistency_regime() const { return mu_prime < binary_entropy(mu) / 2.0; }

std::uint64_t ExplicitSample::good_error_count() const noexcept {
  std::uint64_t n = 0;
  for (auto e : good_error) n += e;
  return n;
}

std::uint64_t ExplicitSample::bad_error_count(std::uint64_t j) const noexcept {
  std::uint64_t n = 0;
  const std::uint64_t* row = bad_bits.data() + (j - 1) * words_per_row;
  for (std::size_t w = 0; w < words_per_row; ++w) n += std::popcount(row[w]);
  return n;
}

void ExplicitSample::swap_rows(std::uint64_t i, std::uint64_t j) {
  if (i == 0 || j == 0 || i > num_bad || j > num_bad)
    throw std::out_of_range("swap_rows: bad classifier index");
  std::swap_ranges(bad_bits.begin() + static_cast<std::ptrdiff_t>((i - 1) * words_per_row),
                   bad_bits.begin() + static_cast<std::ptrdiff_t>(i * words_per_row),
                   bad_bits.begin() + static_cast<std::ptrdiff_t>((j - 1) * words_per_row));
}

ExplicitSample sample_explicit(const ProblemSpec& spec, std::uint64_t m, std::uint64_t num_bad,
                               std::uint64_t seed) {
  spec.validate();
  ExplicitSample s;
  s.m = m;
  s.num_bad = num_bad;
  s.mu_hard = spec.mu_hard;
  s.labels.reserve(m);
  s.hard.reserve(m);
  s.good_error.reserve(m);
  draw_examples(spec, m, seed, &s);
  const std::uint64_t m_hard = s.m_hard();
  s.words_per_row = (m_hard + 63) / 64;
  s.bad_bits.assign(num_bad * s.words_per_row, 0);
  Rng rng = stream_rng(seed, kBadStream);
  for (std::uint64_t j = 0; j < num_bad; ++j) {
    std::uint64_t* row = s.bad_bits.data() + j * s.words_per_row;
    for (std::uint64_t col = 0; col < m_hard; ++col)
      if (rng.bernoulli(spec.mu_hard)) row[col / 64] |= std::uint64_t{1} << (col % 64);
  }
  return s;
}

ExplicitSample fresh_test_batch(const ProblemSpec& spec, std::uint64_t m_test, std::uint64_t seed,
                                std::uint64_t num_bad) {
  ExplicitSample s = sample_explicit(spec, m_test, num_bad, seed);
  s.test_data = true;
  return s;
}

std::uint32_t default_n_max(const ProblemSpec& spec, std::uint64_t m_hard,
                            const AggregationPolicy& policy) {
  const double log2_p0 = log_binomial_pmf(0.0, static_cast<double>(m_hard), spec.mu_hard) * kLog2E;
  // With mu_hard = 1 no bad classifier is error-free; keep a modest prefix.
  if (log2_p0 == kNegInf) return 64;
  const double target = std::log2(policy.zero_error_target);
  auto n = static_cast<std::uint32_t>(std::max(1.0, std::floor(target - log2_p0)));
  auto log2_expected = [&](std::uint32_t k) {
    const double kd = k;
    return kd + std::log2(-std::expm1(-kd * kLn2)) + log2_p0;
  };
  while (n > 1 && log2_expected(n - 1) > target) --n;
  while (log2_expected(n) <= target) ++n;
  return n;
}

AggregatedSample sample_aggregated(const ProblemSpec& spec, std::uint64_t m,
                                   const ClassifierPrior& prior, std::uint32_t n_max,
                                   std::uint64_t seed, const AggregationPolicy& policy) {
  // Every prior is grouped into dyadic blocks; `prior` only affects how the
  // learners weigh positions inside a block.
  (void)prior;
  spec.validate();
  AggregatedSample s;
  s.m = m;
  const ExampleTotals totals = draw_examples(spec, m, seed, nullptr);
  s.m_hard = totals.m_hard;
  s.good_error_count = totals.good_errors;
  s.mu_hard = spec.mu_hard;
  s.log2_pmf.resize(s.m_hard + 1);
  for (std::uint64_t h = 0; h <= s.m_hard; ++h)
    s.log2_pmf[h] = log_binomial_pmf(static_cast<double>(h), static_cast<double>(s.m_hard),
                                     spec.mu_hard) *
                    kLog2E;
  s.n_max = n_max != 0 ? n_max : default_n_max(spec, s.m_hard, policy);
  const double nd = s.n_max;
  const double log2_expected = nd + std::log2(-std::expm1(-nd * kLn2)) + s.log2_pmf[0];
  s.expected_zero_error = std::exp2(log2_expected);
  // P(no zero-error classifier) ~ exp(-E) > 1e-6.
  s.n_max_warning = s.expected_zero_error < std::log(1e6);

  const CellTables tables = cumulative_tables(s.log2_pmf);
  s.blocks.resize(s.n_max);
  for (std::uint32_t n = 1; n <= s.n_max; ++n) {
    BlockCells& block = s.blocks[n - 1];
    block.block = n;
    Rng rng = stream_rng(seed, kBlockStreamBase + n);
    if (n - 1 <= kExactPopulationBits) {
      sample_small_block(block, s, tables, policy, rng);
    } else {
      sample_large_block(block, s, tables, policy, rng);
    }
  }
  return s;
}

KOfM k_of_m(const ProblemSpec& spec, std::uint64_t m) {
  if (m == 0) throw std::invalid_argument("k_of_m: m must be >= 1");
  if (spec.mu_hard >= 1.0) throw std::domain_error("k_of_m: undefined for mu_hard = 1");
  const double md = static_cast<double>(m);
  KOfM k;
  k.epsilon = std::pow(md, -0.25);
  k.log2_k = std::log2(2.0 * md * k.epsilon * k.epsilon) -
             md * (spec.p_hard() + k.epsilon) * std::log2(1.0 - spec.mu_hard);
  k.ceil_log2_k = static_cast<std::uint64_t>(std::max(0.0, std::ceil(k.log2_k)));
  if (k.log2_k < 63.0) k.k = static_cast<std::uint64_t>(std::ceil(std::exp2(k.log2_k)));
  return k;
}

double true_error(const ProblemSpec& spec, std::uint64_t j) { return j == 0 ? spec.mu : spec.mu_prime; }

}  // namespace misspec
