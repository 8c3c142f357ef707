// Acceptance run: one PASS/FAIL line per criterion. `acceptance N` runs
// criterion N only and exits nonzero when it fails; no argument runs all.
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "misspec/experiments.hpp"
#include "misspec/stats.hpp"
#include "oracles.hpp"

using namespace misspec;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

// Required fraction minus three binomial standard deviations.
double floor3(double target, std::uint64_t n) { return target - 3.0 * proportion_sigma(target, n); }

double detail_field(const std::string& detail, const std::string& key) {
  const auto pos = detail.find(key + "=");
  if (pos == std::string::npos) return std::numeric_limits<double>::quiet_NaN();
  return std::stod(detail.substr(pos + key.size() + 1));
}

const SummaryRow* find(const RunResult& r, std::uint64_t m, const std::string& algorithm,
                       const std::string& variant = "") {
  for (const SummaryRow& s : r.summary)
    if (s.m == m && s.algorithm == algorithm && s.variant == variant) return &s;
  return nullptr;
}

ExperimentConfig base(const std::string& experiment, std::uint64_t m, std::uint64_t trials) {
  ExperimentConfig c;
  c.experiment = experiment;
  c.m_list = {m};
  c.trials = trials;
  c.mode = SampleMode::kAggregated;
  return c;
}

void inconsistency(Outcome& o) {
  ExperimentConfig c = base("inconsistency", 4096, 50);
  c.bayes_enabled = false;
  const RunResult r = run_experiment(c);
  const double need = floor3(0.95, 50);
  for (const char* a : {"MAP", "SMAP", "MDL"}) {
    const SummaryRow* s = find(r, 4096, a);
    const double f = s ? s->frac_true_mu_prime.value_or(0.0) : 0.0;
    o.detail << " " << a << " suboptimal=" << f;
    o.require(f >= need, std::string(a) + " suboptimal fraction");
  }
  const SummaryRow* s = find(r, 4096, "MAP");
  const double z = s ? s->frac_zero_error.value_or(0.0) : 0.0;
  o.detail << " zero-error event=" << z;
  o.require(z >= need, "zero-error event fraction");
  double win = 0.0, good = 0.0;
  std::uint64_t n = 0;
  for (const TrialRecord& t : r.rows)
    if (t.algorithm == "MAP") {
      win += *t.score_bits;
      good += detail_field(t.detail, "c0_score");
      ++n;
    }
  win /= n;
  good /= n;
  o.detail << " winning score=" << win << " bits, c0 score=" << good << " bits, margin="
           << good - win;
  o.require(win < good, "winning score below the c0 score");
  o.detail << " (threshold " << need << ")";
}

void bayes_interval(Outcome& o) {
  ExperimentConfig c = base("inconsistency", 4096, 50);
  c.bayes_mu_hard = 0.55;
  c.bayes_m_test = 100000;
  const RunResult r = run_experiment(c);
  std::uint64_t errors = 0, points = 0, inside = 0, n = 0;
  for (const TrialRecord& t : r.rows) {
    if (t.algorithm != "BAYES") continue;
    ++n;
    const auto k = static_cast<std::uint64_t>(std::llround(*t.true_error * c.bayes_m_test));
    errors += k;
    points += c.bayes_m_test;
    inside += *t.true_error >= 0.28 && *t.true_error <= binary_entropy(0.2) + 0.02;
  }
  const double est = static_cast<double>(errors) / static_cast<double>(points);
  const Interval ci = wilson_interval(errors, points);
  o.detail << " BAYES error=" << est << " CI=[" << ci.lo << ", " << ci.hi << "] trials in range "
           << inside << "/" << n << " (required [0.28, " << binary_entropy(0.2) + 0.02 << "])";
  o.require(est >= 0.28 && est <= binary_entropy(0.2) + 0.02, "pooled estimate in range");
  o.require(static_cast<double>(inside) / n >= floor3(0.95, n), "per-trial estimates in range");
}

void orb(Outcome& o) {
  const ExperimentConfig c = base("orb-consistency", 16384, 50);
  const RunResult r = run_experiment(c);
  const SummaryRow* s = find(r, 16384, "ORB");
  const double f = s ? s->frac_true_mu.value_or(0.0) : 0.0;
  o.detail << " ORB optimal=" << f << " (threshold " << floor3(0.95, 50) << ")";
  o.require(f >= floor3(0.95, 50), "ORB optimal fraction");
  const double m = 16384.0;
  const double bad = std::sqrt(0.3 * std::log(2.0));
  const double good = 0.2 + std::sqrt((std::log(2.0) + std::log(m)) / (2.0 * m));
  o.detail << " bad penalty=" << bad << " c0 objective=" << good;
  o.require(bad > good, "bad penalty exceeds c0 objective");
}

void sequential(Outcome& o) {
  const ExperimentConfig c = base("sequential", 2000, 50);
  const RunResult r = run_experiment(c);
  const double bound = binary_entropy(0.2) + 0.05;
  std::uint64_t ok = 0, n = 0;
  double worst_gap = 0.0;
  for (const TrialRecord& t : r.rows) {
    ++n;
    ok += *t.empirical_error <= bound;
    worst_gap = std::max(worst_gap, std::fabs(detail_field(t.detail, "chain_rule_gap")));
  }
  const double f = static_cast<double>(ok) / n;
  o.detail << " rate<=" << bound << " in " << ok << "/" << n << " trials, worst chain-rule gap="
           << worst_gap << " bits";
  o.require(f >= floor3(0.98, n), "mistake-rate fraction");
  o.require(worst_gap <= 1e-6, "chain rule");
}

void lemma1(Outcome& o) {
  const double alpha = 0.05;
  std::uint64_t cells = 0, inside = 0;
  for (std::uint64_t m : {50u, 100u, 200u, 400u, 800u, 1000u})
    for (std::uint64_t a = 0; a <= m; ++a) {
      if (!lemma1_applies(a, m, alpha)) continue;
      ++cells;
      // Uniform prior: -log2 evidence = log2((m+1) C(m, a)).
      const double ev = std::log2(double(m + 1)) +
                        oracle::log2_big(oracle::choose(static_cast<unsigned>(m),
                                                        static_cast<unsigned>(a)));
      const SandwichBounds b = lemma1_sandwich(a, m, 1.0, alpha);
      inside += b.lower <= ev && ev <= b.upper;
    }
  o.detail << " " << inside << "/" << cells << " cells inside";
  o.require(cells > 0 && inside == cells, "containment");
}

void stirling(Outcome& o) {
  std::uint64_t stirling_bad = 0, gap_bad = 0, cells = 0, first_gap_m = 0;
  for (std::uint64_t m = 2; m <= 2000; ++m) {
    const EvidenceTable t(m, ThetaPrior::uniform());
    const double half = 0.5 * std::log2(static_cast<double>(m));
    for (std::uint64_t a = 1; a < m; ++a) {
      ++cells;
      const double exact = oracle::log2_big(oracle::choose(static_cast<unsigned>(m),
                                                           static_cast<unsigned>(a)));
      stirling_bad += std::fabs(exact - m * oracle::entropy_bits(double(a) / m)) > half + 2.0;
      // Same classifier prior on both sides, so the score gap is the data-cost gap.
      const double gap = std::fabs(t.codelength_bits(a) - t.evidence_bits(a));
      if (gap > half + 4.0) {
        ++gap_bad;
        if (first_gap_m == 0) first_gap_m = m;
      }
    }
  }
  o.detail << " cells=" << cells << " Stirling violations=" << stirling_bad
           << " MDL-sMAP violations=" << gap_bad;
  if (gap_bad) o.detail << " (from m=" << first_gap_m << "; gap is log2(m+1))";
  o.require(stirling_bad == 0, "Stirling bound");
  o.require(gap_bad == 0, "MDL-sMAP gap bound");
}

void prop1(Outcome& o) {
  constexpr std::size_t kInputs = 10, kClassifiers = 8;
  Rng rng(20240601, StreamKey{fnv1a64("acceptance/prop1"), 0, 0});
  bool theta_ok = true, zero_ok = true;
  std::uint64_t checked = 0, at_min = 0;
  const auto toy_check = [&](const ToyProblem& toy, bool well, std::size_t c_star, double th_star) {
    double best = std::numeric_limits<double>::infinity(), min_err = 1.0;
    std::size_t best_c = 0;
    for (std::size_t c = 0; c < kClassifiers; ++c) {
      min_err = std::min(min_err, toy.true_error(c));
      double cb = std::numeric_limits<double>::infinity(), ct = 0.0;
      for (int k = 1; k <= 99; ++k) {
        const double d = kl_delta(toy, c, k / 100.0);
        if (d < cb) {
          cb = d;
          ct = k / 100.0;
        }
      }
      theta_ok = theta_ok && std::fabs(ct - toy.true_error(c)) <= 0.01 + 1e-12;
      if (cb < best) {
        best = cb;
        best_c = c;
      }
    }
    if (min_err < 0.5) {
      ++checked;
      at_min += toy.true_error(best_c) <= min_err + 1e-12;
    }
    if (well) zero_ok = zero_ok && kl_delta(toy, c_star, th_star) <= 1e-12;
    else zero_ok = zero_ok && best > 1e-12;
  };
  for (int t = 0; t < 5; ++t) toy_check(ToyProblem::random(rng, kInputs, kClassifiers), false, 0, 0);
  toy_check(ToyProblem::well_specified(rng, kInputs, kClassifiers, 3, 0.2), true, 3, 0.2);
  o.detail << " theta argmin within one step: " << (theta_ok ? "yes" : "no")
           << "; global argmin at min-error classifier in " << at_min << "/" << checked
           << " toys; zero divergence iff well-specified: " << (zero_ok ? "yes" : "no");
  o.require(theta_ok, "theta argmin");
  o.require(at_min == checked, "global argmin at the min-error classifier");
  o.require(zero_ok, "zero divergence iff well-specified");
}

void occam(Outcome& o) {
  Rng rng(20240601, StreamKey{fnv1a64("acceptance/occam"), 0, 0});
  const ToyProblem toy = ToyProblem::random(rng, 16, 64);
  const std::vector<double> prior(64, 1.0 / 64.0);
  const OccamCheck r = occam_bound_check(toy, prior, 100, 0.05, 1000, 7);
  const double limit = 0.05 + 3.0 * proportion_sigma(0.05, 1000);
  o.detail << " violation fraction=" << r.fraction << " (limit " << limit << ")";
  o.require(r.fraction <= limit, "violation fraction");
}

void oracle_equivalence(Outcome& o) {
  ExperimentConfig c = base("oracle-compare", 16, 200);
  c.m_list = {16, 32};
  c.num_bad = (1u << 12) - 1;
  const RunResult r = run_experiment(c);
  double worst = 1.0;
  std::uint64_t n = 0;
  for (const Check& k : r.checks) {
    if (k.name.find("explicit vs aggregated") == std::string::npos) continue;
    ++n;
    const double p = detail_field(k.detail, "p");
    worst = std::min(worst, p);
    if (!k.passed) o.detail << " [" << k.name << " p=" << p << "]";
  }
  o.detail << " " << n << " chi-square tests, smallest p=" << worst;
  o.require(n > 0 && worst > 0.01, "chi-square p > 0.01");
}

void logistic(Outcome& o) {
  double worst = 0.0;
  for (int i = 1; i <= 99; ++i)
    for (int c : {0, 1})
      for (int y : {0, 1}) {
        const LogisticProbabilities p = logistic_equiv_check(i / 100.0, c, y);
        worst = std::max({worst, std::fabs(p.logit - p.direct), std::fabs(p.symmetric - p.direct)});
      }
  o.detail << " largest difference=" << worst;
  o.require(worst <= 1e-12, "identity to 1e-12");
}

void polynomial_tail(Outcome& o) {
  ExperimentConfig in = base("inconsistency", 4096, 50);
  in.classifier_prior = "polynomial";
  in.prior_degree = 2.0;
  in.mu = 0.05;
  in.mu_prime = 0.06;
  in.bayes_enabled = false;
  const double need = floor3(0.9, 50);
  o.detail << " mu'=0.06 < H(0.05)/4=" << binary_entropy(0.05) / 4;
  const RunResult r = run_experiment(in);
  for (const char* a : {"MAP", "SMAP", "MDL"}) {
    const SummaryRow* s = find(r, 4096, a);
    const double f = s ? s->frac_true_mu_prime.value_or(0.0) : 0.0;
    o.detail << " " << a << " suboptimal=" << f;
    o.require(f >= need, std::string(a) + " suboptimal fraction");
  }
  ExperimentConfig out = in;
  out.mu = 0.2;
  out.mu_prime = 0.3;
  const RunResult q = run_experiment(out);
  const SummaryRow* s = find(q, 4096, "MDL");
  const double f = s ? s->frac_true_mu.value_or(0.0) : 0.0;
  o.detail << "; mu'=0.3 > H(0.2)/4=" << binary_entropy(0.2) / 4 << " MDL selects c0=" << f
           << " (threshold " << need << ")";
  o.require(f >= need, "MDL selects c0");
}

const std::vector<std::pair<std::string, std::function<void(Outcome&)>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> list = {
      {"inconsistency of MAP, sMAP and MDL", inconsistency},
      {"full-Bayes error interval", bayes_interval},
      {"ORB consistency", orb},
      {"sequential mistake bound", sequential},
      {"evidence sandwich", lemma1},
      {"Stirling and sMAP-MDL coupling", stirling},
      {"KL optimality on toy problems", prop1},
      {"Occam bound", occam},
      {"explicit vs aggregated samplers", oracle_equivalence},
      {"logistic equivalences", logistic},
      {"polynomial-tail prior", polynomial_tail},
  };
  return list;
}

bool run(std::size_t i) {
  Outcome o;
  try {
    criteria()[i - 1].second(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i << " (" << criteria()[i - 1].first
            << "):" << o.detail.str() << std::endl;
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 2) {
    std::cerr << "usage: acceptance [criterion 1-" << criteria().size() << "]\n";
    return 2;
  }
  if (argc == 2) {
    const long i = std::strtol(argv[1], nullptr, 10);
    if (i < 1 || i > static_cast<long>(criteria().size())) {
      std::cerr << "unknown criterion '" << argv[1] << "'\n";
      return 2;
    }
    return run(static_cast<std::size_t>(i)) ? 0 : 1;
  }
  bool all = true;
  for (std::size_t i = 1; i <= criteria().size(); ++i) all = run(i) && all;
  return all ? 0 : 1;
}
