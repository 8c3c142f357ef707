#include "misspec/priors.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <boost/math/special_functions/zeta.hpp>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "misspec/numerics.hpp"

namespace misspec {
namespace {

constexpr std::uint32_t kDirectBlocks = 18;  // blocks summed term by term
constexpr double kDirectLimit = 262144.0;    // 2^18

// Rissanen's log*: sum of the positive terms of log2 x, log2 log2 x, ...
double log_star_from_log2(double log2_x) {
  double total = 0.0;
  double l = log2_x;
  while (l > 0.0) {
    total += l;
    l = std::log2(l);
  }
  return total;
}

// Integral of 2^{-log* x} over [2^L, inf). Inside the region where exactly K
// iterated logs are positive the antiderivative is ln2^K * log2^{(K)}(x).
double universal_integral_beyond(double log2_x) {
  int k = 1;
  double l = log2_x;
  while (l > 1.0) {
    l = std::log2(l);
    ++k;
  }
  return std::pow(kLn2, k) * (1.0 - l) + std::pow(kLn2, k + 1) / (1.0 - kLn2);
}

// Integral of 2^{-log* x} between 2^{la} and 2^{lb}, both inside the same
// region, computed through differences of iterated logs to avoid cancellation.
double universal_integral_between(double la, double lb) {
  double delta = lb - la;
  double base = la;
  int k = 1;
  while (base > 1.0) {
    delta = std::log1p(delta / base) * kLog2E;
    base = std::log2(base);
    ++k;
  }
  return std::pow(kLn2, k) * delta;
}

double universal_weight(double x) { return std::exp2(-log_star_from_log2(std::log2(x))); }

double loglog_weight(double k) {
  const double l = std::log(k);
  return 1.0 / (k * l * l);
}

struct PriorTables {
  double normalizer = 1.0;
  std::array<double, kDirectBlocks + 1> block_mass{};  // unnormalised, index n
};

PriorTables build_universal() {
  PriorTables t;
  double sum = 0.0;
  for (std::uint32_t n = 1; n <= kDirectBlocks; ++n) {
    const double lo = std::ldexp(1.0, static_cast<int>(n) - 1);
    double block = 0.0;
    for (double x = lo + 1.0; x <= 2.0 * lo; x += 1.0) block += universal_weight(x);
    t.block_mass[n] = block;
    sum += block;
  }
  sum += 1.0;  // x = 1, i.e. c_0
  // Euler-Maclaurin tail from X0 = 2^18 + 1.
  const double x0 = kDirectLimit + 1.0;
  const double h = 1e-3 * x0;
  const double deriv = (universal_weight(x0 + h) - universal_weight(x0 - h)) / (2 * h);
  sum += universal_integral_beyond(std::log2(x0)) + 0.5 * universal_weight(x0) - deriv / 12.0;
  t.normalizer = sum;
  return t;
}

PriorTables build_polynomial(double d) {
  PriorTables t;
  if (d > 1.0) {
    t.normalizer = boost::math::zeta(d);
    for (std::uint32_t n = 1; n <= kDirectBlocks; ++n) {
      const double lo = std::ldexp(1.0, static_cast<int>(n) - 1);
      double block = 0.0;
      for (double x = lo + 1.0; x <= 2.0 * lo; x += 1.0) block += std::pow(x, -d);
      t.block_mass[n] = block;
    }
    return t;
  }
  // Weight 1/(k ln^2 k) at k = j + 2.
  double sum = loglog_weight(2.0);
  for (std::uint32_t n = 1; n <= kDirectBlocks; ++n) {
    const double lo = std::ldexp(1.0, static_cast<int>(n) - 1);
    double block = 0.0;
    for (double k = lo + 2.0; k <= 2.0 * lo + 1.0; k += 1.0) block += loglog_weight(k);
    t.block_mass[n] = block;
    sum += block;
  }
  const double k0 = kDirectLimit + 2.0;
  const double l0 = std::log(k0);
  const double deriv = -(l0 + 2.0) / (k0 * k0 * l0 * l0 * l0);
  sum += 1.0 / l0 + 0.5 * loglog_weight(k0) - deriv / 12.0;
  t.normalizer = sum;
  return t;
}

const PriorTables& universal_tables() {
  static const PriorTables tables = build_universal();
  return tables;
}

}  // namespace

ClassifierPrior::ClassifierPrior(PriorFamily family, double degree)
    : family_(family), degree_(degree) {
  if (family_ == PriorFamily::kUniversalIntegers) normalizer_ = universal_tables().normalizer;
  if (family_ == PriorFamily::kPolynomialTail) normalizer_ = build_polynomial(degree_).normalizer;
}

ClassifierPrior ClassifierPrior::dyadic_block() { return {PriorFamily::kDyadicBlock, 1.0}; }

ClassifierPrior ClassifierPrior::universal_integers() {
  return {PriorFamily::kUniversalIntegers, 1.0};
}

ClassifierPrior ClassifierPrior::polynomial_tail(double degree) {
  if (!(degree >= 1.0) || !std::isfinite(degree))
    throw std::invalid_argument("polynomial prior degree must be >= 1");
  return {PriorFamily::kPolynomialTail, degree};
}

std::string ClassifierPrior::name() const {
  switch (family_) {
    case PriorFamily::kDyadicBlock:
      return "dyadic";
    case PriorFamily::kUniversalIntegers:
      return "universal";
    case PriorFamily::kPolynomialTail: {
      std::ostringstream os;
      os << "polynomial(" << degree_ << ")";
      return os.str();
    }
  }
  return "unknown";
}

std::string ClassifierPrior::description() const {
  std::ostringstream os;
  os.precision(12);
  switch (family_) {
    case PriorFamily::kDyadicBlock:
      os << "P(c0)=1/2; block n holds 2^(n-1) classifiers sharing mass 1/(2n(n+1))";
      break;
    case PriorFamily::kUniversalIntegers:
      os << "P(cj) = 2^-log*(j+1) / " << normalizer_;
      break;
    case PriorFamily::kPolynomialTail:
      if (degree_ > 1.0)
        os << "P(cj) = (j+1)^-" << degree_ << " / zeta(" << degree_ << ")=" << normalizer_;
      else
        os << "P(cj) = 1/((j+2) ln^2(j+2)) / " << normalizer_ << " (log-corrected d=1 tail)";
      break;
  }
  return os.str();
}

std::uint32_t ClassifierPrior::block_of(std::uint64_t j) noexcept {
  return static_cast<std::uint32_t>(std::bit_width(j));
}

double ClassifierPrior::log2_weight_at(double log2_x, std::uint64_t x_exact) const {
  switch (family_) {
    case PriorFamily::kDyadicBlock:
      break;
    case PriorFamily::kUniversalIntegers:
      return -log_star_from_log2(log2_x);
    case PriorFamily::kPolynomialTail:
      if (degree_ > 1.0) return -degree_ * log2_x;
      if (x_exact != 0) {
        const double k = static_cast<double>(x_exact) + 1.0;
        return std::log2(loglog_weight(k));
      }
      // x + 1 ~ x for indices beyond 2^64.
      return -log2_x - 2.0 * std::log2(log2_x * kLn2);
  }
  return 0.0;
}

double ClassifierPrior::log2_prior(std::uint64_t j) const {
  if (family_ == PriorFamily::kDyadicBlock) {
    if (j == 0) return -1.0;
    const double n = block_of(j);
    return -1.0 - std::log2(n * (n + 1.0)) - (n - 1.0);
  }
  const std::uint64_t x = j + 1;
  return log2_weight_at(std::log2(static_cast<double>(x)), x) - std::log2(normalizer_);
}

double ClassifierPrior::log2_prior_in_block(std::uint32_t block, double offset_fraction) const {
  if (block == 0) return log2_prior(0);
  if (family_ == PriorFamily::kDyadicBlock) return log2_prior(std::uint64_t{1} << (block - 1));
  if (block <= 62) {
    const std::uint64_t first = std::uint64_t{1} << (block - 1);
    const auto offset = static_cast<std::uint64_t>(offset_fraction * static_cast<double>(first));
    return log2_prior(first + std::min(offset, first - 1));
  }
  const double log2_x = (block - 1.0) + std::log2(1.0 + offset_fraction);
  return log2_weight_at(log2_x, 0) - std::log2(normalizer_);
}

double ClassifierPrior::log2_block_mass(std::uint32_t block) const {
  if (block == 0) return log2_prior(0);
  const double n = block;
  const double log2_norm = std::log2(normalizer_);
  switch (family_) {
    case PriorFamily::kDyadicBlock:
      return -1.0 - std::log2(n * (n + 1.0));
    case PriorFamily::kUniversalIntegers: {
      if (block <= kDirectBlocks) return std::log2(universal_tables().block_mass[block]) - log2_norm;
      if (block > 65536) throw std::out_of_range("universal prior: block index too large");
      // Midpoint rule over x in [2^{n-1}+1, 2^n].
      const double la = (n - 1.0) + std::log1p(std::ldexp(1.0, -static_cast<int>(block))) * kLog2E;
      const double lb = n + std::log1p(std::ldexp(1.0, -static_cast<int>(block) - 1)) * kLog2E;
      return std::log2(universal_integral_between(la, lb)) - log2_norm;
    }
    case PriorFamily::kPolynomialTail: {
      if (block <= kDirectBlocks) {
        static thread_local double cached_degree = -1.0;
        static thread_local PriorTables cached;
        if (cached_degree != degree_) {
          cached = build_polynomial(degree_);
          cached_degree = degree_;
        }
        return std::log2(cached.block_mass[block]) - log2_norm;
      }
      if (degree_ > 1.0) {
        const double d = degree_;
        const double ln_a = (n - 1.0) * kLn2 + std::log1p(std::ldexp(1.0, -static_cast<int>(block)));
        const double ln_b = n * kLn2 + std::log1p(std::ldexp(1.0, -static_cast<int>(block) - 1));
        const double ln_int =
            (1.0 - d) * ln_a + std::log(-std::expm1((1.0 - d) * (ln_b - ln_a))) - std::log(d - 1.0);
        return ln_int * kLog2E - log2_norm;
      }
      const double ln_a = (n - 1.0) * kLn2 + std::log1p(1.5 * std::ldexp(1.0, 1 - static_cast<int>(block)));
      const double ln_b = n * kLn2 + std::log1p(1.5 * std::ldexp(1.0, -static_cast<int>(block)));
      return std::log2(1.0 / ln_a - 1.0 / ln_b) - log2_norm;
    }
  }
  return kNegInf;
}

double ClassifierPrior::log2_mass_beyond_block(std::uint32_t block) const {
  const double n = block;
  if (family_ == PriorFamily::kDyadicBlock) return -1.0 - std::log2(n + 1.0);
  const double log2_norm = std::log2(normalizer_);
  if (block <= kDirectBlocks) {
    double used = std::exp2(log2_prior(0));
    for (std::uint32_t k = 1; k <= block; ++k) used += std::exp2(log2_block_mass(k));
    return std::log2(1.0 - used);
  }
  if (family_ == PriorFamily::kUniversalIntegers) {
    const double l = n + std::log1p(std::ldexp(1.0, -static_cast<int>(block) - 1)) * kLog2E;
    return std::log2(universal_integral_beyond(l)) - log2_norm;
  }
  if (degree_ > 1.0) {
    const double ln_a = n * kLn2 + std::log1p(std::ldexp(1.0, -static_cast<int>(block) - 1));
    return ((1.0 - degree_) * ln_a - std::log(degree_ - 1.0)) * kLog2E - log2_norm;
  }
  const double ln_a = n * kLn2 + std::log1p(1.5 * std::ldexp(1.0, -static_cast<int>(block)));
  return -std::log2(ln_a) - log2_norm;
}

ThetaPrior ThetaPrior::beta(double alpha, double beta, double floor_weight) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw std::invalid_argument("Beta shapes must be > 0");
  if (!(floor_weight >= 0.0 && floor_weight < 1.0))
    throw std::invalid_argument("floor weight must lie in [0, 1)");
  return ThetaPrior(alpha, beta, floor_weight, -1.0);
}

ThetaPrior ThetaPrior::point_mass(double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("point mass outside [0,1]");
  return ThetaPrior(1.0, 1.0, 0.0, theta);
}

bool ThetaPrior::is_uniform() const noexcept {
  return !is_point_mass() && alpha_ == 1.0 && beta_ == 1.0;
}

double ThetaPrior::density(double theta) const {
  if (theta < 0.0 || theta > 1.0) return 0.0;
  if (is_point_mass()) return 0.0;
  if (is_uniform()) return 1.0;
  const double log_b = log_gamma(alpha_) + log_gamma(beta_) - log_gamma(alpha_ + beta_);
  double beta_density;
  if ((theta == 0.0 && alpha_ != 1.0) || (theta == 1.0 && beta_ != 1.0)) {
    const double shape = theta == 0.0 ? alpha_ : beta_;
    beta_density = shape < 1.0 ? std::numeric_limits<double>::infinity() : 0.0;
  } else {
    const double l = (alpha_ - 1.0) * (theta == 0.0 ? 0.0 : std::log(theta)) +
                     (beta_ - 1.0) * (theta == 1.0 ? 0.0 : std::log1p(-theta)) - log_b;
    beta_density = std::exp(l);
  }
  return (1.0 - floor_) * beta_density + floor_;
}

double ThetaPrior::density_floor() const {
  if (is_point_mass()) return 0.0;
  if (is_uniform()) return 1.0;
  return floor_;
}

std::string ThetaPrior::name() const {
  std::ostringstream os;
  if (is_point_mass()) {
    os << "point(" << point_ << ")";
  } else if (is_uniform()) {
    os << "uniform";
  } else {
    os << "beta(" << alpha_ << "," << beta_ << ";floor=" << floor_ << ")";
  }
  return os.str();
}

namespace {

double log2_beta_fn(double x, double y) {
  return (log_gamma(x) + log_gamma(y) - log_gamma(x + y)) * kLog2E;
}

}  // namespace

double log_evidence_theta(const ThetaPrior& prior, std::uint64_t a, std::uint64_t m) {
  if (a > m) throw std::invalid_argument("log_evidence_theta: a > m");
  const double ad = static_cast<double>(a);
  const double md = static_cast<double>(m);
  if (prior.is_point_mass()) {
    const double t = prior.point();
    double bits = 0.0;
    if (a > 0) bits += t == 0.0 ? kNegInf : ad * std::log2(t);
    if (m > a) bits += t == 1.0 ? kNegInf : (md - ad) * std::log2(1.0 - t);
    return bits;
  }
  const double uniform_part = -std::log2(md + 1.0) - log2_choose(md, ad);
  if (prior.is_uniform()) return uniform_part;
  const double lambda = prior.floor_weight();
  double beta_part = std::log2(1.0 - lambda) +
                     log2_beta_fn(prior.alpha() + ad, prior.beta() + md - ad) -
                     log2_beta_fn(prior.alpha(), prior.beta());
  if (lambda == 0.0) return beta_part;
  return log2_add(beta_part, std::log2(lambda) + uniform_part);
}

double posterior_mean_theta(const ThetaPrior& prior, std::uint64_t a, std::uint64_t m) {
  if (a > m) throw std::invalid_argument("posterior_mean_theta: a > m");
  if (prior.is_point_mass()) return prior.point();
  if (prior.is_uniform())
    return (static_cast<double>(a) + 1.0) / (static_cast<double>(m) + 2.0);
  return std::exp2(log_evidence_theta(prior, a + 1, m + 1) - log_evidence_theta(prior, a, m));
}

}  // namespace misspec
