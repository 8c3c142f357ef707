#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "misspec/priors.hpp"

namespace misspec {

class Rng;

// Binary entropy in bits, H(0) = H(1) = 0.
double binary_entropy(double mu);

// log2[theta^a (1-theta)^(m-a)] with 0 log 0 = 0.
double log_likelihood(std::uint64_t a, std::uint64_t m, double theta);

// Likelihood maximised over theta: -m H(a/m) bits.
double profile_loglik(std::uint64_t a, std::uint64_t m);

double log2_binomial(std::uint64_t m, std::uint64_t a);

// Two-part code: -log2 P(c_j) + log2 C(m, a).
double two_part_codelength(const ClassifierPrior& prior, std::uint64_t j, std::uint64_t a,
                           std::uint64_t m);
double two_part_codelength_bits(double log2_prior, std::uint64_t a, std::uint64_t m);

struct SandwichBounds {
  double lower = 0.0;  // bits
  double upper = 0.0;  // bits
};

bool lemma1_applies(std::uint64_t a, std::uint64_t m, double alpha);

// Bounds on -log2 of the theta-integrated likelihood, with the constant term
// 1/(2 alpha (1-alpha)) converted from nats to bits. Throws
// std::domain_error outside alpha + 1/sqrt(m) < a/m <= 1/2.
SandwichBounds lemma1_sandwich(std::uint64_t a, std::uint64_t m, double gamma, double alpha);

// Per-error-count scores for a fixed sample size m and theta prior.
class EvidenceTable {
 public:
  EvidenceTable(std::uint64_t m, const ThetaPrior& theta_prior);

  std::uint64_t m() const noexcept { return m_; }
  const ThetaPrior& theta_prior() const noexcept { return theta_; }

  // -log2 of the profile likelihood, m H(a/m).
  double profile_bits(std::uint64_t a) const { return profile_[a]; }
  // Profile cost plus -log2 p(theta_hat): the data part of the MAP score.
  double map_bits(std::uint64_t a) const { return map_[a]; }
  // -log2 of the integrated evidence.
  double evidence_bits(std::uint64_t a) const { return evidence_[a]; }
  double codelength_bits(std::uint64_t a) const { return codelength_[a]; }
  double orb_error(std::uint64_t a) const {
    return static_cast<double>(a) / static_cast<double>(m_);
  }
  double posterior_mean(std::uint64_t a) const { return posterior_mean_[a]; }

  // Normalised posterior weights for hypotheses with the given log2 prior
  // masses and error counts; also returns the log2 normaliser.
  std::vector<double> posterior_weights(std::span<const double> log2_prior_mass,
                                        std::span<const std::uint64_t> errors,
                                        double* log2_normalizer = nullptr) const;

 private:
  std::uint64_t m_;
  ThetaPrior theta_;
  std::vector<double> profile_, map_, evidence_, codelength_, posterior_mean_;
};

// A small finite problem with explicit p_D(y|x), used for the KL checks.
struct ToyProblem {
  std::vector<double> px;   // marginal over inputs
  std::vector<double> py1;  // p_D(y = 1 | x)
  std::vector<std::vector<std::uint8_t>> classifiers;  // c(x) in {0, 1}

  void validate() const;
  double true_error(std::size_t c) const;
  // Random instance with at most 16 inputs.
  static ToyProblem random(Rng& rng, std::size_t num_inputs, std::size_t num_classifiers);
  // p_D(y|x) = p_{c,theta}(y|x) for classifier `c` of a random instance.
  static ToyProblem well_specified(Rng& rng, std::size_t num_inputs,
                                   std::size_t num_classifiers, std::size_t c, double theta);
};

enum class LogBase { kBits, kNats };

// KL(p_D || p_{c,theta}) by exact summation; +inf when theta in {0,1}
// assigns zero probability to an outcome D can produce.
double kl_delta(const ToyProblem& toy, std::size_t c, double theta,
                LogBase base = LogBase::kBits);

struct LogisticProbabilities {
  double direct = 0.0;
  double logit = 0.0;
  double symmetric = 0.0;
};

// p_{c,theta}(y|x) computed three ways: directly, through the logistic form
// with beta = ln((1-theta)/theta) applied to g(x) = 1 - 2c(x), and through
// the symmetric form on the same +-1 recoding with beta' = beta/2.
LogisticProbabilities logistic_equiv_check(double theta, int c_output, int y);

}  // namespace misspec
