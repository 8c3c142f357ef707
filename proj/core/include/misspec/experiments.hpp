#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "misspec/learners.hpp"

namespace misspec {

inline constexpr const char* kSchemaVersion = "misspec-rows/1";

// Raised for anything wrong with a configuration; maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SampleMode { kAuto, kExplicit, kAggregated };

struct ExperimentConfig {
  std::string experiment = "inconsistency";
  double mu = 0.2;
  double mu_prime = 0.3;
  double mu_hard = 0.5;
  double bayes_mu_hard = 0.55;
  std::uint64_t bayes_m_test = 100000;
  bool bayes_enabled = true;
  std::string classifier_prior = "dyadic";  // dyadic | universal | polynomial
  double prior_degree = 2.0;
  double theta_alpha = 1.0;
  double theta_beta = 1.0;
  double theta_floor = 0.0;
  double theta_point = -1.0;  // >= 0 selects the point-mass prior
  std::vector<std::uint64_t> m_list;  // empty: experiment default
  std::uint64_t trials = 0;           // 0: experiment default
  std::uint64_t seed = 20240601;
  SampleMode mode = SampleMode::kAuto;
  std::string out_dir = "out";
  std::uint32_t n_max = 0;     // 0: sampler default
  std::uint64_t num_bad = 0;   // explicit K; 0: 2^min(n_max, 16) - 1
  double delta = 0.05;
  double lemma1_alpha = 0.05;
  std::uint64_t occam_classifiers = 64;
  double prune_bits = 50.0;
  unsigned threads = 0;  // 0: hardware concurrency
  bool progress = false;  // trial counts on stderr; not a config key

  // Raw text as read and the --set overrides, echoed into meta.json.
  std::string source_text;
  std::vector<std::string> overrides;

  ProblemSpec problem() const;
  ProblemSpec bayes_problem() const;
  ClassifierPrior make_classifier_prior() const;
  ThetaPrior make_theta_prior() const;
  std::vector<std::uint64_t> resolved_m_list() const;
  std::uint64_t resolved_trials() const;
  SampleMode mode_for(std::uint64_t m) const;
  std::uint64_t explicit_num_bad(std::uint64_t m) const;
};

const std::vector<std::string>& experiment_names();

// Parses flat JSON with dotted keys. Unknown keys and bad values throw ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
// `value` is JSON, or a bare string, or a comma list for m_list.
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);
// Throws ConfigError on any invalid parameter; called before sampling.
void validate(const ExperimentConfig& cfg);
// Resolved configuration with sorted keys.
std::string canonical_json(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);
// One line per key: name, default, description.
std::string config_help();

// One row per (trial, algorithm). Optional fields print as empty cells.
struct TrialRecord {
  std::string experiment;
  std::string variant;
  std::uint64_t m = 0;
  std::uint64_t trial = 0;
  std::uint64_t seed = 0;
  std::string algorithm;
  std::string selected;
  std::optional<double> empirical_error;
  std::optional<double> true_error;
  std::optional<double> true_error_lo;
  std::optional<double> true_error_hi;
  std::optional<double> score_bits;
  std::optional<bool> zero_error_event;
  std::string detail;
  double wall_ms = 0.0;  // written to timing.csv only
};

struct SummaryRow {
  std::string variant;
  std::uint64_t m = 0;
  std::string algorithm;
  std::uint64_t rows = 0;
  std::optional<double> mean_empirical_error;
  std::optional<double> mean_true_error;
  std::optional<double> frac_true_mu;        // true_error == mu
  std::optional<double> frac_true_mu_prime;  // true_error == mu_prime
  std::optional<double> frac_zero_error;
  std::optional<double> mean_score_bits;
};

struct RegionRow {
  double mu = 0.0;
  double lower_curve = 0.0;
  double upper_curve = 0.0;
  double mu_prime = 0.0;
  double observed_map_error = 0.0;
};

struct Check {
  std::string name;
  bool hard = false;  // invariant (exit 2) rather than statistical (exit 3 under --strict)
  bool passed = true;
  std::string detail;
};

struct RunResult {
  std::vector<TrialRecord> rows;  // sorted by (variant, m, trial, algorithm)
  std::vector<SummaryRow> summary;
  std::vector<RegionRow> region;
  std::vector<Check> checks;
  std::vector<std::string> warnings;

  bool hard_failure() const;
  bool statistical_failure() const;
};

// Summary per (variant, m, algorithm), computed only from `rows`. The
// fractions compare true_error against mu and mu_prime exactly.
std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& rows, double mu,
                                  double mu_prime);

// Runs `body(i)` for i in [0, n) on a pool of `threads` workers.
void parallel_for(std::uint64_t n, unsigned threads,
                  const std::function<void(std::uint64_t)>& body);

std::uint64_t trial_seed(std::uint64_t base, const std::string& experiment, std::uint64_t m,
                         std::uint64_t trial);

// Throws ConfigError for an unknown experiment or invalid configuration.
RunResult run_experiment(const ExperimentConfig& cfg);

RunResult run_inconsistency(const ExperimentConfig& cfg);
RunResult run_orb(const ExperimentConfig& cfg);
RunResult run_sequential(const ExperimentConfig& cfg);
RunResult run_lemma1(const ExperimentConfig& cfg);
RunResult run_prop1(const ExperimentConfig& cfg);
RunResult run_region_sweep(const ExperimentConfig& cfg);
RunResult run_oracle_compare(const ExperimentConfig& cfg);
RunResult run_occam_check(const ExperimentConfig& cfg);

// Shortest round-trip decimal; NaN and infinities as "nan", "inf", "-inf".
std::string format_double(double v);

std::string rows_csv(const std::vector<TrialRecord>& rows);
std::string summary_csv(const std::vector<SummaryRow>& rows);
std::string region_csv(const std::vector<RegionRow>& rows);
std::string timing_csv(const std::vector<TrialRecord>& rows);
// Parses the output of rows_csv.
std::vector<TrialRecord> parse_rows_csv(const std::string& text);
std::string meta_json(const ExperimentConfig& cfg, const RunResult& result);

// Writes rows.csv, summary.csv, timing.csv, meta.json and (when present) region.csv.
void write_outputs(const ExperimentConfig& cfg, const RunResult& result,
                   const std::string& dir);

}  // namespace misspec
