#include "misspec/inference.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "misspec/numerics.hpp"
#include "misspec/rng.hpp"

namespace misspec {

double binary_entropy(double mu) {
  if (!(mu >= 0.0 && mu <= 1.0)) throw std::domain_error("binary_entropy: mu outside [0,1]");
  if (mu == 0.0 || mu == 1.0) return 0.0;
  return -mu * std::log2(mu) - (1.0 - mu) * std::log2(1.0 - mu);
}

double log_likelihood(std::uint64_t a, std::uint64_t m, double theta) {
  if (a > m) throw std::invalid_argument("log_likelihood: a > m");
  if (!(theta >= 0.0 && theta <= 1.0)) throw std::domain_error("log_likelihood: bad theta");
  double bits = 0.0;
  if (a > 0) bits += theta == 0.0 ? kNegInf : static_cast<double>(a) * std::log2(theta);
  if (m > a) bits += theta == 1.0 ? kNegInf : static_cast<double>(m - a) * std::log2(1.0 - theta);
  return bits;
}

double profile_loglik(std::uint64_t a, std::uint64_t m) {
  if (a > m) throw std::invalid_argument("profile_loglik: a > m");
  if (m == 0) return 0.0;
  return -static_cast<double>(m) * binary_entropy(static_cast<double>(a) / static_cast<double>(m));
}

double log2_binomial(std::uint64_t m, std::uint64_t a) {
  if (a > m) throw std::invalid_argument("log2_binomial: a > m");
  return log2_choose(static_cast<double>(m), static_cast<double>(a));
}

double two_part_codelength_bits(double log2_prior, std::uint64_t a, std::uint64_t m) {
  return -log2_prior + log2_binomial(m, a);
}

double two_part_codelength(const ClassifierPrior& prior, std::uint64_t j, std::uint64_t a,
                           std::uint64_t m) {
  return two_part_codelength_bits(prior.log2_prior(j), a, m);
}

bool lemma1_applies(std::uint64_t a, std::uint64_t m, double alpha) {
  if (m == 0 || a > m || !(alpha > 0.0)) return false;
  const double e = static_cast<double>(a) / static_cast<double>(m);
  return alpha + 1.0 / std::sqrt(static_cast<double>(m)) < e && e <= 0.5;
}

SandwichBounds lemma1_sandwich(std::uint64_t a, std::uint64_t m, double gamma, double alpha) {
  if (!lemma1_applies(a, m, alpha)) throw std::domain_error("lemma1_sandwich: precondition fails");
  if (!(gamma > 0.0)) throw std::domain_error("lemma1_sandwich: gamma must be > 0");
  SandwichBounds b;
  b.lower = -profile_loglik(a, m);
  b.upper = b.lower + 0.5 * std::log2(static_cast<double>(m)) +
            0.5 / (alpha * (1.0 - alpha)) * kLog2E - std::log2(gamma);
  return b;
}

EvidenceTable::EvidenceTable(std::uint64_t m, const ThetaPrior& theta_prior)
    : m_(m), theta_(theta_prior) {
  const std::size_t n = m + 1;
  profile_.resize(n);
  map_.resize(n);
  evidence_.resize(n);
  codelength_.resize(n);
  posterior_mean_.resize(n);
  for (std::uint64_t a = 0; a <= m; ++a) {
    profile_[a] = -profile_loglik(a, m);
    if (theta_.is_point_mass()) {
      map_[a] = -log_likelihood(a, m, theta_.point());
    } else {
      const double theta_hat = m == 0 ? 0.5 : static_cast<double>(a) / static_cast<double>(m);
      map_[a] = profile_[a] - std::log2(theta_.density(theta_hat));
    }
    evidence_[a] = -log_evidence_theta(theta_, a, m);
    codelength_[a] = log2_binomial(m, a);
    posterior_mean_[a] = posterior_mean_theta(theta_, a, m);
  }
}

std::vector<double> EvidenceTable::posterior_weights(std::span<const double> log2_prior_mass,
                                                     std::span<const std::uint64_t> errors,
                                                     double* log2_normalizer) const {
  if (log2_prior_mass.size() != errors.size())
    throw std::invalid_argument("posterior_weights: size mismatch");
  std::vector<double> w(errors.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = log2_prior_mass[i] - evidence_[errors[i]];
  const double z = log2_sum(w);
  for (double& x : w) x = std::exp2(x - z);
  if (log2_normalizer != nullptr) *log2_normalizer = z;
  return w;
}

void ToyProblem::validate() const {
  if (px.empty() || px.size() > 16) throw std::invalid_argument("toy problem: 1..16 inputs");
  if (py1.size() != px.size()) throw std::invalid_argument("toy problem: py1 size");
  double total = 0.0;
  for (double p : px) {
    if (!(p >= 0.0)) throw std::invalid_argument("toy problem: negative p(x)");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-12) throw std::invalid_argument("toy problem: p(x) not normalised");
  for (double p : py1)
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("toy problem: p(y|x) outside [0,1]");
  for (const auto& c : classifiers)
    if (c.size() != px.size()) throw std::invalid_argument("toy problem: classifier arity");
}

double ToyProblem::true_error(std::size_t c) const {
  double e = 0.0;
  for (std::size_t x = 0; x < px.size(); ++x)
    e += px[x] * (classifiers[c][x] != 0 ? 1.0 - py1[x] : py1[x]);
  return e;
}

ToyProblem ToyProblem::random(Rng& rng, std::size_t num_inputs, std::size_t num_classifiers) {
  if (num_inputs == 0 || num_inputs > 16) throw std::invalid_argument("toy problem: 1..16 inputs");
  ToyProblem t;
  double total = 0.0;
  for (std::size_t x = 0; x < num_inputs; ++x) {
    t.px.push_back(-std::log(rng.uniform_open()));
    total += t.px.back();
  }
  for (double& p : t.px) p /= total;
  for (std::size_t x = 0; x < num_inputs; ++x) t.py1.push_back(rng.uniform_open());
  for (std::size_t c = 0; c < num_classifiers; ++c) {
    std::vector<std::uint8_t> out(num_inputs);
    for (auto& o : out) o = static_cast<std::uint8_t>(rng.next() >> 63);
    t.classifiers.push_back(std::move(out));
  }
  return t;
}

ToyProblem ToyProblem::well_specified(Rng& rng, std::size_t num_inputs,
                                      std::size_t num_classifiers, std::size_t c, double theta) {
  ToyProblem t = random(rng, num_inputs, num_classifiers);
  if (c >= num_classifiers) throw std::invalid_argument("toy problem: classifier out of range");
  for (std::size_t x = 0; x < num_inputs; ++x)
    t.py1[x] = t.classifiers[c][x] != 0 ? 1.0 - theta : theta;
  return t;
}

double kl_delta(const ToyProblem& toy, std::size_t c, double theta, LogBase base) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw std::domain_error("kl_delta: theta outside [0,1]");
  double kl = 0.0;
  for (std::size_t x = 0; x < toy.px.size(); ++x) {
    if (toy.px[x] == 0.0) continue;
    const double model1 = toy.classifiers[c][x] != 0 ? 1.0 - theta : theta;
    const double pd[2] = {1.0 - toy.py1[x], toy.py1[x]};
    const double pm[2] = {1.0 - model1, model1};
    for (int y = 0; y < 2; ++y) {
      if (pd[y] == 0.0) continue;
      if (pm[y] == 0.0) return std::numeric_limits<double>::infinity();
      kl += toy.px[x] * pd[y] * (std::log(pd[y]) - std::log(pm[y]));
    }
  }
  return base == LogBase::kBits ? kl * kLog2E : kl;
}

LogisticProbabilities logistic_equiv_check(double theta, int c_output, int y) {
  if (!(theta > 0.0 && theta < 1.0)) throw std::domain_error("logistic: theta outside (0,1)");
  if ((c_output != 0 && c_output != 1) || (y != 0 && y != 1))
    throw std::invalid_argument("logistic: outputs must be 0 or 1");
  LogisticProbabilities p;
  p.direct = y == c_output ? 1.0 - theta : theta;

  const double beta = std::log1p(-theta) - std::log(theta);
  const double g = 1.0 - 2.0 * c_output;
  // e^{-bg} / (1 + e^{-bg}) = 1 / (1 + e^{bg}).
  p.logit = y == 1 ? 1.0 / (1.0 + std::exp(beta * g)) : 1.0 / (1.0 + std::exp(-beta * g));

  const double beta_sym = beta / 2.0;
  const double num = std::exp(-beta_sym * g);
  const double den = std::exp(beta_sym * g) + num;
  const double sym1 = num / den;
  p.symmetric = y == 1 ? sym1 : std::exp(beta_sym * g) / den;
  return p;
}

}  // namespace misspec
