#include <algorithm>
#include <cmath>

#include "misspec/learners.hpp"

namespace misspec {
namespace {

HypothesisGroup good_group(std::uint64_t errors, const ClassifierPrior& prior) {
  HypothesisGroup g;
  g.errors = errors;
  g.log2_prior_first = g.log2_prior_mean = prior.log2_prior(0);
  return g;
}

std::uint64_t index_in_block(std::uint32_t block, double offset_frac) {
  if (block == 0 || block > 63) return 0;
  const std::uint64_t first = std::uint64_t{1} << (block - 1);
  const auto offset = static_cast<std::uint64_t>(offset_frac * static_cast<double>(first));
  return first + std::min(offset, first - 1);
}

}  // namespace

HypothesisSet make_hypotheses(const ExplicitSample& sample, const ClassifierPrior& prior) {
  HypothesisSet set;
  set.m = sample.m;
  set.m_hard = sample.m_hard();
  set.mu_hard = sample.mu_hard;
  set.groups.reserve(sample.num_bad + 1);
  set.groups.push_back(good_group(sample.good_error_count(), prior));
  for (std::uint64_t j = 1; j <= sample.num_bad; ++j) {
    HypothesisGroup g;
    g.block = ClassifierPrior::block_of(j);
    g.index = j;
    const double first = std::ldexp(1.0, static_cast<int>(g.block) - 1);
    g.offset_frac = (static_cast<double>(j) - first) / first;
    g.errors = sample.bad_error_count(j);
    g.log2_prior_first = g.log2_prior_mean = prior.log2_prior(j);
    set.groups.push_back(g);
  }
  return set;
}

HypothesisSet make_hypotheses(const AggregatedSample& sample, const ClassifierPrior& prior,
                              bool include_tail) {
  HypothesisSet set;
  set.m = sample.m;
  set.m_hard = sample.m_hard;
  set.mu_hard = sample.mu_hard;
  set.aggregated = true;
  set.log2_pmf = sample.log2_pmf;
  set.groups.push_back(good_group(sample.good_error_count, prior));
  for (const BlockCells& block : sample.blocks) {
    const std::uint32_t n = block.block;
    const double mass = prior.log2_block_mass(n);
    const double mean = mass - ClassifierPrior::log2_block_population(n);
    for (const SampledCell& c : block.cells) {
      HypothesisGroup g;
      g.block = n;
      g.index = index_in_block(n, c.min_offset_frac);
      g.offset_frac = c.min_offset_frac;
      g.errors = c.h;
      g.count = c.count;
      g.log2_count = c.log2_count;
      g.exact_count = c.exact;
      g.log2_prior_first =
          prior.constant_within_blocks() ? mean : prior.log2_prior_in_block(n, c.min_offset_frac);
      g.log2_prior_mean = mean;
      set.groups.push_back(g);
    }
    for (const DetRange& r : block.ranges) {
      HypothesisRange hr;
      hr.block = n;
      hr.h_lo = r.h_lo;
      hr.h_hi = r.h_hi;
      hr.log2_prior_first = prior.constant_within_blocks() ? mean : prior.log2_prior_in_block(n, 0.0);
      hr.log2_block_mass = mass;
      set.ranges.push_back(hr);
    }
  }
  if (include_tail) set.log2_tail_mass = prior.log2_mass_beyond_block(sample.n_max);
  return set;
}

bool zero_error_event(const HypothesisSet& set, const ProblemSpec& spec) {
  if (set.m == 0 || spec.mu_hard >= 1.0) return false;
  const KOfM k = k_of_m(spec, set.m);
  for (std::size_t i = 1; i < set.groups.size(); ++i) {
    const HypothesisGroup& g = set.groups[i];
    if (g.errors != 0) continue;
    if (g.index != 0 && k.k) {
      if (g.index <= *k.k) return true;
      continue;
    }
    const double log2_index = static_cast<double>(g.block) - 1.0 + std::log2(1.0 + g.offset_frac);
    if (log2_index <= k.log2_k) return true;
  }
  for (const HypothesisRange& r : set.ranges)
    if (r.h_lo == 0 && static_cast<double>(r.block) - 1.0 <= k.log2_k) return true;
  return false;
}

}  // namespace misspec
