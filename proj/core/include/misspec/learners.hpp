#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "misspec/inference.hpp"
#include "misspec/numerics.hpp"
#include "misspec/priors.hpp"
#include "misspec/problem.hpp"
#include "misspec/rng.hpp"

namespace misspec {

enum class Algorithm { kMap, kSmap, kMdl, kBayes, kOrb };

std::string algorithm_name(Algorithm a);

// Classifiers that share a block and an error count. For an explicit sample
// every classifier is its own group.
struct HypothesisGroup {
  std::uint32_t block = 0;      // 0 for c_0
  std::uint64_t index = 0;      // lowest classifier index when it fits, else 0
  double offset_frac = 0.0;     // position of the lowest index inside the block
  std::uint64_t errors = 0;
  std::uint64_t count = 1;      // valid when exact_count
  double log2_count = 0.0;
  bool exact_count = true;
  double log2_prior_first = 0.0;  // prior of the lowest-index member
  double log2_prior_mean = 0.0;   // mean prior over members
};

// Error counts h in [h_lo, h_hi] of one block, each holding the expected
// count 2^{block-1} * Binomial(h; m_hard, mu_hard).
struct HypothesisRange {
  std::uint32_t block = 0;
  std::uint32_t h_lo = 0;
  std::uint32_t h_hi = 0;
  double log2_prior_first = 0.0;
  double log2_block_mass = 0.0;
};

// A sample seen through a prior: every represented classifier with its error
// count and prior, plus (optionally) the prior mass beyond the last sampled
// block, spread over error counts at its expectation.
struct HypothesisSet {
  std::uint64_t m = 0;
  std::uint64_t m_hard = 0;
  double mu_hard = 0.5;
  bool aggregated = false;
  std::vector<HypothesisGroup> groups;  // groups[0] is c_0
  std::vector<HypothesisRange> ranges;
  std::vector<double> log2_pmf;  // Binomial(h; m_hard, mu_hard), aggregated only
  double log2_tail_mass = kNegInf;
};

HypothesisSet make_hypotheses(const ExplicitSample& sample, const ClassifierPrior& prior);
HypothesisSet make_hypotheses(const AggregatedSample& sample, const ClassifierPrior& prior,
                              bool include_tail);

// Whether some bad classifier among c_1..c_{k(m)} has zero empirical error.
bool zero_error_event(const HypothesisSet& set, const ProblemSpec& spec);

struct LearnerResult {
  Algorithm algorithm = Algorithm::kMap;
  std::string selected;  // "c0", "c17", "b2460/h0", or "predictive"
  bool selected_good = false;
  std::uint32_t block = 0;
  std::uint64_t errors = 0;
  double empirical_error = 0.0;
  double true_error = 0.0;
  double true_error_lo = 0.0;
  double true_error_hi = 0.0;
  double score = 0.0;  // bits, or the bound value for ORB
  bool zero_error_event = false;
};

// Objective of a selector for one hypothesis, given its prior and error count.
double selector_score(Algorithm algorithm, const EvidenceTable& table, double log2_prior,
                      std::uint64_t errors);

LearnerResult select_map(const HypothesisSet& set, const EvidenceTable& table);
LearnerResult select_smap(const HypothesisSet& set, const EvidenceTable& table);
// Only the sample size of `table` is used: MDL does not depend on the theta prior.
LearnerResult select_mdl(const HypothesisSet& set, const EvidenceTable& table);
LearnerResult select_orb(const HypothesisSet& set, const EvidenceTable& table);
LearnerResult select(Algorithm algorithm, const HypothesisSet& set, const EvidenceTable& table);

// Fills true_error from the closed form (mu for c_0, mu' otherwise).
void attach_true_error(LearnerResult& r, const ProblemSpec& spec);

// Label 1 iff sum_j w_j [out_j = 1 ? 1 - thbar_j : thbar_j] >= 1/2 sum_j w_j.
int bayes_vote(std::span<const double> weights, std::span<const double> theta_bar,
               std::span<const std::uint8_t> outputs);

struct TestPoint {
  int y = 0;
  bool hard = false;
  bool good_error = false;
};

struct BayesPrediction {
  int label = 0;
  double p_one = 0.5;   // predictive probability of label 1
  std::uint64_t draws = 0;  // binomial draws needed to settle the decision
};

// The full-Bayes predictive for one training sample. On a hard test point the
// outputs of the classifiers in a group are split by Binomial(count, mu_hard);
// draws stop as soon as the undrawn groups cannot change the decision.
class BayesPredictor {
 public:
  BayesPredictor(const HypothesisSet& set, const EvidenceTable& table);

  BayesPrediction predict(const TestPoint& x, Rng& rng) const;
  // Posterior probability of c_0.
  double posterior_good() const noexcept { return posterior_good_; }
  double log2_evidence() const noexcept { return log2_z_; }
  // Posterior expectation of the training error rate.
  double posterior_mean_error() const noexcept { return mean_error_; }

 private:
  struct Stochastic {
    double weight;     // per-classifier weight, relative to the largest term
    double theta_bar;
    std::uint64_t count;
    double radius;
  };

  double mu_hard_ = 0.5;
  double w_good_ = 0.0;
  double theta_good_ = 0.5;
  double z_ = 0.0;              // total weight
  double easy_correct_ = 0.0;   // bad-classifier mass voting for y on easy points
  double hard_expected_ = 0.0;  // same on hard points with every split at its mean
  double deviation_total_ = 0.0;
  double posterior_good_ = 0.0;
  double log2_z_ = 0.0;
  double mean_error_ = 0.0;
  std::vector<Stochastic> stochastic_;  // sorted by decreasing radius
};

struct GeneralizationEstimate {
  double estimate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::uint64_t errors = 0;
  std::uint64_t n = 0;
  std::uint64_t hard_errors = 0;
  std::uint64_t hard_points = 0;
};

GeneralizationEstimate bayes_generalization(const BayesPredictor& predictor,
                                            const ProblemSpec& spec, std::uint64_t m_test,
                                            std::uint64_t seed);

struct OccamCheck {
  std::uint64_t trials = 0;
  std::uint64_t violations = 0;
  double fraction = 0.0;
  double sigma = 0.0;
  bool within_bound = false;  // fraction <= delta + 3 sigma
};

// Monte-Carlo check of e_D(c) <= e_S(c) + sqrt((ln 1/P(c) + ln 1/delta) / 2m)
// simultaneously over every classifier of `toy`, with prior `prior`.
OccamCheck occam_bound_check(const ToyProblem& toy, std::span<const double> prior,
                             std::uint64_t m, double delta, std::uint64_t trials,
                             std::uint64_t seed);

struct SequentialResult {
  std::uint64_t m = 0;
  std::uint64_t mistakes = 0;
  double total_log_loss = 0.0;  // bits
  std::vector<double> log_loss;  // per step
  double joint_log_loss = 0.0;  // -log2 P(y^m | x^m) from the final posterior
  double chain_rule_gap = 0.0;
  double pruned_fraction = 0.0;
  double mistake_rate() const {
    return m == 0 ? 0.0 : static_cast<double>(mistakes) / static_cast<double>(m);
  }
};

// Prequential Bayes over a finite classifier set: outputs[c][i] is classifier
// c's label on example i, labels[i] the observed label.
SequentialResult sequential_bayes(std::span<const double> log2_prior,
                                  const std::vector<std::vector<std::uint8_t>>& outputs,
                                  std::span<const std::uint8_t> labels,
                                  const ThetaPrior& theta_prior);

SequentialResult sequential_bayes(const ExplicitSample& sample, const ClassifierPrior& prior,
                                  const ThetaPrior& theta_prior);

// Toy problem stream of m examples drawn from D.
SequentialResult sequential_bayes(const ToyProblem& toy, std::span<const double> log2_prior,
                                  std::uint64_t m, const ThetaPrior& theta_prior,
                                  std::uint64_t seed);

struct SequentialOptions {
  double deterministic_count = 1e4;
  double prune_bits = 50.0;
};

// The main construction at scale: blocks are tracked as cells that split on
// each hard example, with the prior mass far beyond any relevant block kept at
// its expectation. Examples come from the same stream as the batch samplers.
SequentialResult sequential_bayes_aggregated(const ProblemSpec& spec, std::uint64_t m,
                                             const ClassifierPrior& prior,
                                             const ThetaPrior& theta_prior, std::uint64_t seed,
                                             const SequentialOptions& options = {});

}  // namespace misspec
