#pragma once

#include <cstdint>
#include <string>

namespace misspec {

enum class PriorFamily { kDyadicBlock, kUniversalIntegers, kPolynomialTail };

// Prior over the countable classifier set {c_0, c_1, ...}.
//
// Every family is also viewed through the dyadic grouping used by the
// aggregated sampler: block n >= 1 holds indices [2^{n-1}, 2^n - 1] and c_0 sits
// alone in "block 0". Only the dyadic-block prior is constant inside a block;
// for the others the within-block position of a classifier matters and is
// addressed by its offset fraction f in [0, 1), i.e. index 2^{n-1} (1 + f).
class ClassifierPrior {
 public:
  static ClassifierPrior dyadic_block();
  static ClassifierPrior universal_integers();
  // degree > 1 uses (j+1)^-degree / zeta(degree). degree == 1 is not
  // normalisable as a pure power and uses 1 / ((j+2) ln^2(j+2)) instead.
  static ClassifierPrior polynomial_tail(double degree);

  PriorFamily family() const noexcept { return family_; }
  double degree() const noexcept { return degree_; }
  std::string name() const;
  // Free-text note for run metadata (normaliser, tail correction).
  std::string description() const;

  double log2_prior(std::uint64_t j) const;
  double log2_prior_in_block(std::uint32_t block, double offset_fraction) const;
  double log2_block_mass(std::uint32_t block) const;
  // log2 of the total prior of all blocks strictly after `block`.
  double log2_mass_beyond_block(std::uint32_t block) const;
  bool constant_within_blocks() const noexcept {
    return family_ == PriorFamily::kDyadicBlock;
  }
  // Sum of the unnormalised weights (2.865... for the universal prior).
  double normalizer() const noexcept { return normalizer_; }

  static std::uint32_t block_of(std::uint64_t j) noexcept;
  static double log2_block_population(std::uint32_t block) noexcept {
    return static_cast<double>(block) - 1.0;
  }

 private:
  ClassifierPrior(PriorFamily family, double degree);

  // log2 of the unnormalised weight at x = j + 1, given log2 x.
  double log2_weight_at(double log2_x, std::uint64_t x_exact) const;

  PriorFamily family_;
  double degree_ = 0.0;
  double normalizer_ = 1.0;
};

// Prior density over the label-noise rate theta: a Beta(alpha, beta) density
// mixed with weight `floor_weight` into the uniform density, or a point mass.
class ThetaPrior {
 public:
  static ThetaPrior uniform() { return ThetaPrior(1.0, 1.0, 0.0, -1.0); }
  static ThetaPrior beta(double alpha, double beta, double floor_weight = 0.0);
  static ThetaPrior point_mass(double theta);

  double alpha() const noexcept { return alpha_; }
  double beta() const noexcept { return beta_; }
  double floor_weight() const noexcept { return floor_; }
  bool is_point_mass() const noexcept { return point_ >= 0.0; }
  double point() const noexcept { return point_; }
  bool is_uniform() const noexcept;

  // Density at theta (the point-mass variant reports 0 off its atom).
  double density(double theta) const;
  // The constant gamma with density >= gamma everywhere; 0 when none exists.
  double density_floor() const;
  std::string name() const;

 private:
  ThetaPrior(double a, double b, double floor, double point)
      : alpha_(a), beta_(b), floor_(floor), point_(point) {}

  double alpha_;
  double beta_;
  double floor_;
  double point_;
};

// log2 of the integral over theta of theta^a (1-theta)^(m-a) p(theta).
double log_evidence_theta(const ThetaPrior& prior, std::uint64_t a, std::uint64_t m);

// E[theta | a errors in m].
double posterior_mean_theta(const ThetaPrior& prior, std::uint64_t a, std::uint64_t m);

}  // namespace misspec
