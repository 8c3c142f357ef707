#pragma once

#include <cstdint>
#include <string_view>

namespace misspec {

// SplitMix64 finalizer (Steele, Lea & Flood). Bijective on 64-bit words.
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

// FNV-1a over the bytes of `text`; used to turn experiment names into ids.
constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Identifies one independent random stream: (experiment, trial, stream).
struct StreamKey {
  std::uint64_t experiment = 0;
  std::uint64_t trial = 0;
  std::uint64_t stream = 0;
};

// Derives the starting counter of a stream. Each component passes through the
// mixer before being folded in, so neighbouring keys give unrelated streams.
constexpr std::uint64_t derive_seed(std::uint64_t base, const StreamKey& key) noexcept {
  std::uint64_t s = splitmix64_mix(base ^ 0x6a09e667f3bcc908ULL);
  s = splitmix64_mix(s ^ splitmix64_mix(key.experiment + kGoldenGamma));
  s = splitmix64_mix(s ^ splitmix64_mix(key.trial + 2 * kGoldenGamma));
  s = splitmix64_mix(s ^ splitmix64_mix(key.stream + 3 * kGoldenGamma));
  return s;
}

// Counter-based SplitMix64 generator: output i is mix(seed + (i+1)*gamma).
// Every sampling routine below is written with integer thresholds or fixed
// double arithmetic so that draws are reproducible bit for bit.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}
  Rng(std::uint64_t base, const StreamKey& key) noexcept : state_(derive_seed(base, key)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept { return next(); }

  std::uint64_t next() noexcept {
    state_ += kGoldenGamma;
    return splitmix64_mix(state_);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  bool bernoulli(double p) noexcept;

  // Exact draws by inversion outward from the mode; cost grows with the
  // standard deviation, so callers keep the mean moderate (< ~1e6).
  std::uint64_t binomial(std::uint64_t n, double p);
  std::uint64_t poisson(double lambda);

  std::uint64_t counter() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace misspec
