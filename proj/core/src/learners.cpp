#include "misspec/learners.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <cmath>
#include <stdexcept>
#include <tuple>

#include "misspec/numerics.hpp"
#include "misspec/stats.hpp"

namespace misspec {
namespace {

double penalty(Algorithm a, double log2_prior, std::uint64_t m) {
  if (a != Algorithm::kOrb || m == 0) return -log2_prior;
  const double md = static_cast<double>(m);
  return std::sqrt((-log2_prior * kLn2 + std::log(md)) / (2.0 * md));
}

double data_cost(Algorithm a, const EvidenceTable& t, std::uint64_t errors) {
  switch (a) {
    case Algorithm::kMap:
      return t.map_bits(errors);
    case Algorithm::kSmap:
      return t.evidence_bits(errors);
    case Algorithm::kMdl:
      return t.codelength_bits(errors);
    case Algorithm::kOrb:
      return t.m() == 0 ? 0.0 : t.orb_error(errors);
    case Algorithm::kBayes:
      break;
  }
  throw std::invalid_argument("data_cost: not a selector");
}

// Range-minimum table over per-error-count costs, ties to the smaller count.
class SparseArgmin {
 public:
  explicit SparseArgmin(std::vector<double> v) : v_(std::move(v)) {
    const std::size_t n = v_.size();
    levels_.emplace_back(n);
    for (std::size_t i = 0; i < n; ++i) levels_[0][i] = static_cast<std::uint32_t>(i);
    for (std::size_t len = 2; len <= n; len *= 2) {
      const auto& prev = levels_.back();
      std::vector<std::uint32_t> cur(n - len + 1);
      for (std::size_t i = 0; i + len <= n; ++i) cur[i] = better(prev[i], prev[i + len / 2]);
      levels_.push_back(std::move(cur));
    }
  }

  std::uint32_t argmin(std::uint32_t lo, std::uint32_t hi) const {
    const std::uint32_t len = hi - lo + 1;
    const int k = std::bit_width(len) - 1;
    return better(levels_[k][lo], levels_[k][hi + 1 - (1U << k)]);
  }

  double value(std::uint32_t i) const { return v_[i]; }

 private:
  std::uint32_t better(std::uint32_t a, std::uint32_t b) const {
    if (v_[b] < v_[a]) return b;
    if (v_[a] < v_[b]) return a;
    return std::min(a, b);
  }

  std::vector<double> v_;
  std::vector<std::vector<std::uint32_t>> levels_;
};

std::string group_descriptor(std::uint32_t block, std::uint64_t index, std::uint64_t errors) {
  if (block == 0) return "c0";
  if (index != 0) return "c" + std::to_string(index);
  return "b" + std::to_string(block) + "/h" + std::to_string(errors);
}

}  // namespace

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kMap:
      return "MAP";
    case Algorithm::kSmap:
      return "SMAP";
    case Algorithm::kMdl:
      return "MDL";
    case Algorithm::kBayes:
      return "BAYES";
    case Algorithm::kOrb:
      return "ORB";
  }
  return "?";
}

double selector_score(Algorithm algorithm, const EvidenceTable& table, double log2_prior,
                      std::uint64_t errors) {
  return penalty(algorithm, log2_prior, table.m()) + data_cost(algorithm, table, errors);
}

LearnerResult select(Algorithm algorithm, const HypothesisSet& set, const EvidenceTable& table) {
  if (algorithm == Algorithm::kBayes) throw std::invalid_argument("select: BAYES is not a selector");
  if (table.m() != set.m) throw std::invalid_argument("select: table built for another m");
  if (set.groups.empty()) throw std::invalid_argument("select: empty hypothesis set");

  // Candidates compare by score, then block, in-block position and error count.
  using Key = std::tuple<double, std::uint32_t, double, std::uint64_t>;
  Key best{std::numeric_limits<double>::infinity(), 0, 0.0, 0};
  std::size_t best_group = 0;
  bool best_is_group = true;

  for (std::size_t i = 0; i < set.groups.size(); ++i) {
    const HypothesisGroup& g = set.groups[i];
    const Key key{selector_score(algorithm, table, g.log2_prior_first, g.errors), g.block,
                  g.offset_frac, g.errors};
    if (i == 0 || key < best) {
      best = key;
      best_group = i;
    }
  }
  if (!set.ranges.empty()) {
    std::vector<double> costs(set.m_hard + 1);
    for (std::uint64_t h = 0; h <= set.m_hard; ++h) costs[h] = data_cost(algorithm, table, h);
    const SparseArgmin rmq(std::move(costs));
    for (std::size_t i = 0; i < set.ranges.size(); ++i) {
      const HypothesisRange& r = set.ranges[i];
      const std::uint32_t h = rmq.argmin(r.h_lo, r.h_hi);
      const Key key{penalty(algorithm, r.log2_prior_first, table.m()) + rmq.value(h), r.block, 0.0,
                    h};
      if (key < best) {
        best = key;
        best_group = i;
        best_is_group = false;
      }
    }
  }

  LearnerResult r;
  r.algorithm = algorithm;
  r.score = std::get<0>(best);
  r.block = std::get<1>(best);
  r.errors = std::get<3>(best);
  r.selected_good = best_is_group && best_group == 0;
  const std::uint64_t index = best_is_group ? set.groups[best_group].index : 0;
  r.selected = group_descriptor(r.block, r.selected_good ? 0 : index, r.errors);
  r.empirical_error =
      set.m == 0 ? 0.0 : static_cast<double>(r.errors) / static_cast<double>(set.m);
  return r;
}

LearnerResult select_map(const HypothesisSet& set, const EvidenceTable& table) {
  return select(Algorithm::kMap, set, table);
}
LearnerResult select_smap(const HypothesisSet& set, const EvidenceTable& table) {
  return select(Algorithm::kSmap, set, table);
}
LearnerResult select_mdl(const HypothesisSet& set, const EvidenceTable& table) {
  return select(Algorithm::kMdl, set, table);
}
LearnerResult select_orb(const HypothesisSet& set, const EvidenceTable& table) {
  return select(Algorithm::kOrb, set, table);
}

void attach_true_error(LearnerResult& r, const ProblemSpec& spec) {
  r.true_error = r.selected_good ? spec.mu : spec.mu_prime;
  r.true_error_lo = r.true_error_hi = r.true_error;
}

int bayes_vote(std::span<const double> weights, std::span<const double> theta_bar,
               std::span<const std::uint8_t> outputs) {
  if (weights.size() != theta_bar.size() || weights.size() != outputs.size())
    throw std::invalid_argument("bayes_vote: size mismatch");
  double p1 = 0.0, z = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    p1 += weights[i] * (outputs[i] != 0 ? 1.0 - theta_bar[i] : theta_bar[i]);
    z += weights[i];
  }
  return p1 >= 0.5 * z ? 1 : 0;
}

BayesPredictor::BayesPredictor(const HypothesisSet& set, const EvidenceTable& table)
    : mu_hard_(set.mu_hard) {
  if (table.m() != set.m) throw std::invalid_argument("BayesPredictor: table built for another m");
  const double mu = mu_hard_;
  const double deviation = std::max(mu, 1.0 - mu);
  const double det_cut = 1e4;

  // Deterministic mass per error count: ranges and tail, both at expectation.
  std::vector<double> log2_det;
  if (set.aggregated && (!set.ranges.empty() || set.log2_tail_mass != kNegInf)) {
    std::vector<double> diff(set.m_hard + 2, 0.0);
    for (const HypothesisRange& r : set.ranges) {
      const double mass = std::exp2(r.log2_block_mass);
      diff[r.h_lo] += mass;
      diff[r.h_hi + 1] -= mass;
    }
    const double tail = set.log2_tail_mass == kNegInf ? 0.0 : std::exp2(set.log2_tail_mass);
    log2_det.resize(set.m_hard + 1);
    double run = 0.0;
    for (std::uint64_t h = 0; h <= set.m_hard; ++h) {
      run += diff[h];
      const double covered = std::max(run, 0.0) + tail;
      log2_det[h] = covered > 0.0
                        ? std::log2(covered) + set.log2_pmf[h] - table.evidence_bits(h)
                        : kNegInf;
    }
  }

  // Largest log2 weight, used as the common scale.
  const HypothesisGroup& good = set.groups.front();
  const double lw_good = good.log2_prior_mean - table.evidence_bits(good.errors);
  double top = lw_good;
  for (std::size_t i = 1; i < set.groups.size(); ++i) {
    const HypothesisGroup& g = set.groups[i];
    top = std::max(top, g.log2_count + g.log2_prior_mean - table.evidence_bits(g.errors));
  }
  for (double l : log2_det) top = std::max(top, l);

  w_good_ = std::exp2(lw_good - top);
  theta_good_ = table.posterior_mean(good.errors);
  z_ = w_good_;
  double weighted_errors = w_good_ * static_cast<double>(good.errors);
  for (std::size_t i = 1; i < set.groups.size(); ++i) {
    const HypothesisGroup& g = set.groups[i];
    const double each = std::exp2(g.log2_prior_mean - table.evidence_bits(g.errors) - top);
    const double total = std::exp2(g.log2_count + g.log2_prior_mean -
                                   table.evidence_bits(g.errors) - top);
    const double tb = table.posterior_mean(g.errors);
    z_ += total;
    weighted_errors += total * static_cast<double>(g.errors);
    easy_correct_ += total * (1.0 - tb);
    hard_expected_ += total * ((1.0 - mu) * (1.0 - tb) + mu * tb);
    const bool random = g.exact_count && mu > 0.0 && mu < 1.0 &&
                        static_cast<double>(g.count) * std::min(mu, 1.0 - mu) < det_cut;
    if (random && total > 0.0) {
      const double radius = total * std::fabs(1.0 - 2.0 * tb) * deviation;
      stochastic_.push_back({each, tb, g.count, radius});
      deviation_total_ += radius;
    }
  }
  for (std::uint64_t h = 0; h < log2_det.size(); ++h) {
    if (log2_det[h] == kNegInf) continue;
    const double w = std::exp2(log2_det[h] - top);
    const double tb = table.posterior_mean(h);
    z_ += w;
    weighted_errors += w * static_cast<double>(h);
    easy_correct_ += w * (1.0 - tb);
    hard_expected_ += w * ((1.0 - mu) * (1.0 - tb) + mu * tb);
  }
  std::stable_sort(stochastic_.begin(), stochastic_.end(),
                   [](const Stochastic& a, const Stochastic& b) { return a.radius > b.radius; });
  posterior_good_ = w_good_ / z_;
  mean_error_ = set.m == 0 ? 0.0 : weighted_errors / z_ / static_cast<double>(set.m);
  log2_z_ = top + std::log2(z_);
}

BayesPrediction BayesPredictor::predict(const TestPoint& x, Rng& rng) const {
  BayesPrediction out;
  double p = w_good_ * (x.good_error ? theta_good_ : 1.0 - theta_good_);
  const double half = 0.5 * z_;
  if (!x.hard) {
    p += easy_correct_;
  } else {
    p += hard_expected_;
    double remaining = deviation_total_;
    const double slack = 1e-12 * z_;
    for (const Stochastic& s : stochastic_) {
      if (std::fabs(p - half) > remaining + slack) break;
      const std::uint64_t k = rng.binomial(s.count, mu_hard_);
      const double n = static_cast<double>(s.count);
      p += s.weight * (1.0 - 2.0 * s.theta_bar) * (n * mu_hard_ - static_cast<double>(k));
      remaining -= s.radius;
      ++out.draws;
    }
  }
  const bool correct = x.y == 1 ? p >= half : p > half;
  out.label = correct ? x.y : 1 - x.y;
  const double p_y = std::clamp(p / z_, 0.0, 1.0);
  out.p_one = x.y == 1 ? p_y : 1.0 - p_y;
  return out;
}

GeneralizationEstimate bayes_generalization(const BayesPredictor& predictor,
                                            const ProblemSpec& spec, std::uint64_t m_test,
                                            std::uint64_t seed) {
  const ExplicitSample batch = fresh_test_batch(spec, m_test, seed);
  GeneralizationEstimate g;
  g.n = m_test;
  for (std::uint64_t i = 0; i < m_test; ++i) {
    const TestPoint x{batch.labels[i], batch.hard[i] != 0, batch.good_error[i] != 0};
    Rng rng(seed, StreamKey{1, i, 0});
    const BayesPrediction pred = predictor.predict(x, rng);
    const bool wrong = pred.label != x.y;
    g.errors += wrong;
    if (x.hard) {
      ++g.hard_points;
      g.hard_errors += wrong;
    }
  }
  g.estimate = m_test == 0 ? 0.0 : static_cast<double>(g.errors) / static_cast<double>(m_test);
  const Interval ci = wilson_interval(g.errors, m_test);
  g.lo = ci.lo;
  g.hi = ci.hi;
  return g;
}

OccamCheck occam_bound_check(const ToyProblem& toy, std::span<const double> prior,
                             std::uint64_t m, double delta, std::uint64_t trials,
                             std::uint64_t seed) {
  toy.validate();
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("occam_bound_check: delta in (0,1)");
  if (m == 0) throw std::invalid_argument("occam_bound_check: m must be >= 1");
  if (prior.size() != toy.classifiers.size())
    throw std::invalid_argument("occam_bound_check: one prior weight per classifier");
  const std::size_t k = toy.classifiers.size();
  std::vector<double> true_err(k), radius(k);
  const double md = static_cast<double>(m);
  for (std::size_t c = 0; c < k; ++c) {
    if (!(prior[c] > 0.0)) throw std::invalid_argument("occam_bound_check: prior must be > 0");
    true_err[c] = toy.true_error(c);
    radius[c] = std::sqrt((std::log(1.0 / prior[c]) + std::log(1.0 / delta)) / (2.0 * md));
  }
  std::vector<double> cdf(toy.px.size());
  double acc = 0.0;
  for (std::size_t x = 0; x < cdf.size(); ++x) cdf[x] = acc += toy.px[x];

  OccamCheck r;
  r.trials = trials;
  std::vector<std::uint64_t> errs(k);
  for (std::uint64_t t = 0; t < trials; ++t) {
    Rng rng(seed, StreamKey{2, t, 0});
    std::fill(errs.begin(), errs.end(), 0);
    for (std::uint64_t i = 0; i < m; ++i) {
      const double u = rng.uniform() * acc;
      const auto x = static_cast<std::size_t>(
          std::min<std::ptrdiff_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(),
                                   static_cast<std::ptrdiff_t>(cdf.size()) - 1));
      const int y = rng.bernoulli(toy.py1[x]) ? 1 : 0;
      for (std::size_t c = 0; c < k; ++c) errs[c] += toy.classifiers[c][x] != y;
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (true_err[c] > static_cast<double>(errs[c]) / md + radius[c]) {
        ++r.violations;
        break;
      }
    }
  }
  r.fraction = trials == 0 ? 0.0 : static_cast<double>(r.violations) / static_cast<double>(trials);
  r.sigma = proportion_sigma(delta, trials);
  r.within_bound = r.fraction <= delta + 3.0 * r.sigma;
  return r;
}

}  // namespace misspec
