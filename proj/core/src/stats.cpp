#include "misspec/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

namespace misspec {

Interval wilson_interval(std::uint64_t successes, std::uint64_t n, double z) {
  if (successes > n) throw std::invalid_argument("wilson_interval: successes > n");
  if (n == 0) return {0.0, 1.0};
  const double nd = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nd;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nd;
  const double centre = (p + z2 / (2.0 * nd)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nd + z2 / (4.0 * nd * nd)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

double proportion_sigma(double p, std::uint64_t n) {
  if (n == 0) return 0.0;
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

ChiSquareResult chi_square_two_sample(const std::map<std::int64_t, std::uint64_t>& a,
                                      const std::map<std::int64_t, std::uint64_t>& b,
                                      std::uint64_t min_pooled) {
  std::set<std::int64_t> keys;
  for (const auto& [k, v] : a) keys.insert(k);
  for (const auto& [k, v] : b) keys.insert(k);
  auto get = [](const auto& m, std::int64_t k) -> std::uint64_t {
    const auto it = m.find(k);
    return it == m.end() ? 0 : it->second;
  };

  std::vector<std::pair<double, double>> cells;
  double ca = 0.0, cb = 0.0;
  for (std::int64_t k : keys) {
    ca += static_cast<double>(get(a, k));
    cb += static_cast<double>(get(b, k));
    if (ca + cb >= static_cast<double>(min_pooled)) {
      cells.emplace_back(ca, cb);
      ca = cb = 0.0;
    }
  }
  if (ca + cb > 0.0) {
    if (cells.empty()) {
      cells.emplace_back(ca, cb);
    } else {
      cells.back().first += ca;
      cells.back().second += cb;
    }
  }

  double na = 0.0, nb = 0.0;
  for (const auto& [x, y] : cells) {
    na += x;
    nb += y;
  }
  ChiSquareResult r;
  if (cells.size() < 2 || na == 0.0 || nb == 0.0) return r;
  const double ra = std::sqrt(nb / na), rb = std::sqrt(na / nb);
  for (const auto& [x, y] : cells) {
    const double d = x * ra - y * rb;
    r.statistic += d * d / (x + y);
  }
  r.dof = static_cast<int>(cells.size()) - 1;
  boost::math::chi_squared dist(r.dof);
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  return r;
}

}  // namespace misspec
