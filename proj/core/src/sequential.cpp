#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "misspec/learners.hpp"
#include "misspec/numerics.hpp"

namespace misspec {
namespace {

constexpr std::uint64_t kSplitStream = 5;

double theta_bar(const ThetaPrior& prior, std::uint64_t a, std::uint64_t n) {
  return posterior_mean_theta(prior, a, n);
}

void finish(SequentialResult& r) {
  r.total_log_loss = 0.0;
  for (double l : r.log_loss) r.total_log_loss += l;
  r.chain_rule_gap = std::fabs(r.total_log_loss - r.joint_log_loss);
}

}  // namespace

SequentialResult sequential_bayes(std::span<const double> log2_prior,
                                  const std::vector<std::vector<std::uint8_t>>& outputs,
                                  std::span<const std::uint8_t> labels,
                                  const ThetaPrior& theta_prior) {
  const std::size_t k = outputs.size();
  if (log2_prior.size() != k) throw std::invalid_argument("sequential_bayes: prior size");
  const std::uint64_t m = labels.size();
  for (const auto& row : outputs)
    if (row.size() != m) throw std::invalid_argument("sequential_bayes: output length");

  SequentialResult r;
  r.m = m;
  r.log_loss.reserve(m);
  std::vector<double> lw(log2_prior.begin(), log2_prior.end());
  std::vector<std::uint64_t> errs(k, 0);
  for (std::uint64_t i = 0; i < m; ++i) {
    const int y = labels[i];
    const double lz_old = log2_sum(lw);
    double p1 = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double tb = theta_bar(theta_prior, errs[c], i);
      const int out = outputs[c][i];
      p1 += std::exp2(lw[c] - lz_old) * (out == 1 ? 1.0 - tb : tb);
      if (out == y) {
        lw[c] += std::log2(1.0 - tb);
      } else {
        lw[c] += std::log2(tb);
        ++errs[c];
      }
    }
    r.log_loss.push_back(lz_old - log2_sum(lw));
    const int predicted = p1 >= 0.5 ? 1 : 0;
    r.mistakes += predicted != y;
  }
  std::vector<double> joint(k);
  for (std::size_t c = 0; c < k; ++c)
    joint[c] = log2_prior[c] + log_evidence_theta(theta_prior, errs[c], m);
  // Posterior weights are relative to the prior mass of the finite set.
  r.joint_log_loss = k == 0 ? 0.0 : log2_sum(log2_prior) - log2_sum(joint);
  finish(r);
  return r;
}

SequentialResult sequential_bayes(const ExplicitSample& sample, const ClassifierPrior& prior,
                                  const ThetaPrior& theta_prior) {
  const std::uint64_t m = sample.m;
  std::vector<double> log2_prior(sample.num_bad + 1);
  std::vector<std::vector<std::uint8_t>> outputs(sample.num_bad + 1,
                                                 std::vector<std::uint8_t>(m));
  for (std::uint64_t j = 0; j <= sample.num_bad; ++j) log2_prior[j] = prior.log2_prior(j);
  for (std::uint64_t i = 0; i < m; ++i) outputs[0][i] = sample.labels[i] ^ sample.good_error[i];
  for (std::uint64_t j = 1; j <= sample.num_bad; ++j) {
    for (std::uint64_t i = 0; i < m; ++i) outputs[j][i] = sample.labels[i];
    for (std::size_t col = 0; col < sample.hard_positions.size(); ++col)
      if (sample.bad_error(j, col)) outputs[j][sample.hard_positions[col]] ^= 1U;
  }
  return sequential_bayes(log2_prior, outputs, sample.labels, theta_prior);
}

SequentialResult sequential_bayes(const ToyProblem& toy, std::span<const double> log2_prior,
                                  std::uint64_t m, const ThetaPrior& theta_prior,
                                  std::uint64_t seed) {
  toy.validate();
  Rng rng(seed, StreamKey{3, 0, 0});
  std::vector<double> cdf(toy.px.size());
  double acc = 0.0;
  for (std::size_t x = 0; x < cdf.size(); ++x) cdf[x] = acc += toy.px[x];
  std::vector<std::uint8_t> labels(m);
  std::vector<std::vector<std::uint8_t>> outputs(toy.classifiers.size(),
                                                 std::vector<std::uint8_t>(m));
  for (std::uint64_t i = 0; i < m; ++i) {
    const double u = rng.uniform() * acc;
    const auto x = static_cast<std::size_t>(
        std::min<std::ptrdiff_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(),
                                 static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    labels[i] = rng.bernoulli(toy.py1[x]) ? 1 : 0;
    for (std::size_t c = 0; c < toy.classifiers.size(); ++c) outputs[c][i] = toy.classifiers[c][x];
  }
  return sequential_bayes(log2_prior, outputs, labels, theta_prior);
}

namespace {

struct SeqCell {
  double u = 0.0;  // weight relative to the running scale
  double log2_count = kNegInf;  // only maintained for inexact cells
  std::uint64_t count = 0;
  bool exact = true;

  double log2_size() const {
    if (!exact) return log2_count;
    return count == 0 ? kNegInf : std::log2(static_cast<double>(count));
  }
};

struct SeqBlock {
  std::uint32_t n = 0;
  std::uint32_t h_lo = 0;
  double log2_mean_prior = 0.0;
  std::vector<SeqCell> cells;
};

SeqCell exact_cell(std::uint64_t count, double u) {
  SeqCell c;
  c.count = count;
  c.u = u;
  return c;
}

void merge_into(SeqCell& dst, const SeqCell& src) {
  if (src.exact && dst.exact) {
    dst.count += src.count;
  } else {
    dst.log2_count = log2_add(dst.log2_size(), src.log2_size());
    dst.exact = false;
    dst.count = 0;
  }
  dst.u += src.u;
}

// A cell whose expected count has fallen below the threshold becomes an
// integer count at the rounded expectation, with its weight rescaled to match.
void settle(SeqCell& c, double log2_det) {
  if (c.exact || c.log2_count >= log2_det) return;
  const auto rounded = static_cast<std::uint64_t>(std::llround(std::exp2(c.log2_count)));
  const double ratio = static_cast<double>(rounded) / std::exp2(c.log2_count);
  c.u *= ratio;
  c.exact = true;
  c.count = rounded;
}

}  // namespace

SequentialResult sequential_bayes_aggregated(const ProblemSpec& spec, std::uint64_t m,
                                             const ClassifierPrior& prior,
                                             const ThetaPrior& theta_prior, std::uint64_t seed,
                                             const SequentialOptions& options) {
  spec.validate();
  const ExplicitSample ex = sample_explicit(spec, m, 0, seed);
  const std::uint64_t t_total = ex.m_hard();
  const double mu = spec.mu_hard;
  const double log2_det = std::log2(options.deterministic_count);
  const double prune = std::exp2(-options.prune_bits);
  const double log2_stay = std::log2(1.0 - mu);
  const double log2_move = std::log2(mu);

  // Blocks with more than deterministic_count expected members in every cell
  // up to the last hard example are merged into one expectation tail.
  std::uint32_t n_sim = 0;
  if (mu < 1.0) {
    const double worst = -std::log2(std::min(mu, 1.0 - mu));
    n_sim = static_cast<std::uint32_t>(
        std::ceil(static_cast<double>(t_total) * worst + log2_det) + 1.0);
  }
  std::vector<SeqBlock> blocks;
  blocks.reserve(n_sim);
  for (std::uint32_t n = 1; n <= n_sim; ++n) {
    SeqBlock b;
    b.n = n;
    const double mass = prior.log2_block_mass(n);
    b.log2_mean_prior = mass - ClassifierPrior::log2_block_population(n);
    SeqCell c;
    c.u = std::exp2(mass);
    c.log2_count = static_cast<double>(n) - 1.0;
    if (c.log2_count < log2_det) {
      c = exact_cell(std::uint64_t{1} << (n - 1), c.u);
    } else {
      c.exact = false;
    }
    b.cells.push_back(c);
    blocks.push_back(std::move(b));
  }
  const double log2_tail = prior.log2_mass_beyond_block(n_sim);
  std::vector<double> tail(1, std::exp2(log2_tail));

  double u_good = std::exp2(prior.log2_prior(0));
  std::uint64_t a_good = 0;
  std::uint64_t t = 0;
  // Per error count: pending factor for block cells and their summed weight.
  std::vector<double> factor(1, 1.0), cell_sum(1, 0.0), tb;
  for (const SeqBlock& b : blocks) cell_sum[0] += b.cells[0].u;

  Rng rng(seed, StreamKey{0, 0, kSplitStream});
  SequentialResult r;
  r.m = m;
  r.log_loss.reserve(m);
  for (std::uint64_t i = 0; i < m; ++i) {
    tb.resize(t + 1);
    for (std::uint64_t h = 0; h <= t; ++h) tb[h] = theta_bar(theta_prior, h, i);
    const double tb_good = theta_bar(theta_prior, a_good, i);
    const bool good_err = ex.good_error[i] != 0;

    double z_old = u_good;
    for (std::uint64_t h = 0; h <= t; ++h) z_old += cell_sum[h] * factor[h] + tail[h];

    const double u_good_new = u_good * (good_err ? tb_good : 1.0 - tb_good);
    double z_new = u_good_new;
    if (ex.hard[i] == 0) {
      for (std::uint64_t h = 0; h <= t; ++h) {
        factor[h] *= 1.0 - tb[h];
        tail[h] *= 1.0 - tb[h];
        z_new += cell_sum[h] * factor[h] + tail[h];
      }
    } else {
      const double threshold = prune * z_old;
      std::vector<double> new_sum(t + 2, 0.0);
      for (SeqBlock& b : blocks) {
        auto& cells = b.cells;
        cells.emplace_back();
        for (std::size_t idx = cells.size() - 1; idx-- > 0;) {
          const std::uint64_t h = b.h_lo + idx;
          SeqCell old = cells[idx];
          old.u *= factor[h];
          SeqCell stay, move;
          if (old.exact) {
            if (old.count == 0) {
              cells[idx] = SeqCell{};
              continue;
            }
            const std::uint64_t k = rng.binomial(old.count, mu);
            const double n = static_cast<double>(old.count);
            stay = exact_cell(old.count - k, old.u * static_cast<double>(old.count - k) / n *
                                                 (1.0 - tb[h]));
            move = exact_cell(k, old.u * static_cast<double>(k) / n * tb[h]);
          } else {
            stay.exact = move.exact = false;
            stay.log2_count = old.log2_count + log2_stay;
            move.log2_count = old.log2_count + log2_move;
            stay.u = old.u * (1.0 - mu) * (1.0 - tb[h]);
            move.u = old.u * mu * tb[h];
            settle(stay, log2_det);
            settle(move, log2_det);
          }
          merge_into(cells[idx + 1], move);
          cells[idx] = stay;
        }
        std::size_t front = 0;
        while (front < cells.size() && cells[front].u < threshold) {
          r.pruned_fraction += cells[front].u / z_old;
          ++front;
        }
        std::size_t back = cells.size();
        while (back > front && cells[back - 1].u < threshold) {
          r.pruned_fraction += cells[back - 1].u / z_old;
          --back;
        }
        cells.erase(cells.begin() + static_cast<std::ptrdiff_t>(back), cells.end());
        cells.erase(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(front));
        b.h_lo += static_cast<std::uint32_t>(front);
        for (std::size_t idx = 0; idx < cells.size(); ++idx) new_sum[b.h_lo + idx] += cells[idx].u;
      }
      std::erase_if(blocks, [](const SeqBlock& b) { return b.cells.empty(); });

      std::vector<double> new_tail(t + 2, 0.0);
      for (std::uint64_t h = 0; h <= t; ++h) {
        new_tail[h] += tail[h] * (1.0 - mu) * (1.0 - tb[h]);
        new_tail[h + 1] += tail[h] * mu * tb[h];
      }
      tail = std::move(new_tail);
      cell_sum = std::move(new_sum);
      factor.assign(t + 2, 1.0);
      ++t;
      for (std::uint64_t h = 0; h <= t; ++h) z_new += cell_sum[h] + tail[h];
    }
    u_good = u_good_new;
    a_good += good_err;

    const double p_label = z_new / z_old;
    r.log_loss.push_back(std::log2(z_old) - std::log2(z_new));
    const int y = ex.labels[i];
    const bool correct = y == 1 ? p_label >= 0.5 : p_label > 0.5;
    r.mistakes += !correct;

    // Keep the total weight at 1.
    const double s = 1.0 / z_new;
    u_good *= s;
    for (std::uint64_t h = 0; h <= t; ++h) {
      factor[h] *= s;
      tail[h] *= s;
    }
  }

  // Joint evidence recomputed from the final counts.
  std::vector<double> terms;
  terms.push_back(prior.log2_prior(0) + log_evidence_theta(theta_prior, a_good, m));
  for (const SeqBlock& b : blocks) {
    for (std::size_t idx = 0; idx < b.cells.size(); ++idx) {
      const SeqCell& c = b.cells[idx];
      if (c.log2_size() == kNegInf) continue;
      terms.push_back(c.log2_size() + b.log2_mean_prior +
                      log_evidence_theta(theta_prior, b.h_lo + idx, m));
    }
  }
  if (log2_tail != kNegInf) {
    const double td = static_cast<double>(t_total);
    for (std::uint64_t h = 0; h <= t_total; ++h) {
      const double lp = log_binomial_pmf(static_cast<double>(h), td, mu) * kLog2E;
      if (lp == kNegInf) continue;
      terms.push_back(log2_tail + lp + log_evidence_theta(theta_prior, h, m));
    }
  }
  r.joint_log_loss = -log2_sum(terms);
  finish(r);
  return r;
}

}  // namespace misspec
