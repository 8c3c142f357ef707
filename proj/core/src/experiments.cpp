#include "misspec/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "json.hpp"
#include "misspec/numerics.hpp"
#include "misspec/stats.hpp"

#ifndef MISSPEC_VERSION
#define MISSPEC_VERSION "0.0.0"
#endif

namespace misspec {

using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------- config keys

double as_double(const json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError("config key '" + key + "' expects a number");
  return j.get<double>();
}

std::uint64_t as_u64(const json& j, const std::string& key) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number()) {
    const double v = j.get<double>();
    if (v >= 0.0 && v < 1.8e19 && std::floor(v) == v) return static_cast<std::uint64_t>(v);
  }
  throw ConfigError("config key '" + key + "' expects a non-negative integer");
}

bool as_bool(const json& j, const std::string& key) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer() && (j.get<int>() == 0 || j.get<int>() == 1)) return j.get<int>() == 1;
  throw ConfigError("config key '" + key + "' expects true or false");
}

std::string as_string(const json& j) { return j.is_string() ? j.get<std::string>() : j.dump(); }

std::vector<std::uint64_t> as_m_list(const json& j) {
  std::vector<std::uint64_t> out;
  if (j.is_array()) {
    for (const json& e : j) out.push_back(as_u64(e, "m_list"));
    return out;
  }
  if (j.is_number()) return {as_u64(j, "m_list")};
  if (!j.is_string()) throw ConfigError("config key 'm_list' expects a list of integers");
  std::stringstream ss(j.get<std::string>());
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size() || item.empty())
      throw ConfigError("config key 'm_list': bad entry '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::string mode_name(SampleMode m) {
  switch (m) {
    case SampleMode::kExplicit:
      return "explicit";
    case SampleMode::kAggregated:
      return "aggregated";
    case SampleMode::kAuto:
      break;
  }
  return "auto";
}

struct KeyDef {
  const char* name;
  const char* help;
  void (*set)(ExperimentConfig&, const json&);
  json (*get)(const ExperimentConfig&);
};

#define MS_NUM(field, key)                                                             \
  [](ExperimentConfig& c, const json& j) { c.field = as_double(j, key); },            \
      [](const ExperimentConfig& c) { return json(c.field); }
#define MS_U64(field, key)                                                             \
  [](ExperimentConfig& c, const json& j) {                                             \
    c.field = static_cast<decltype(c.field)>(as_u64(j, key));                          \
  },                                                                                   \
      [](const ExperimentConfig& c) { return json(c.field); }
#define MS_STR(field)                                                                  \
  [](ExperimentConfig& c, const json& j) { c.field = as_string(j); },                  \
      [](const ExperimentConfig& c) { return json(c.field); }

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = {
      {"experiment", "inconsistency | orb-consistency | sequential | lemma1 | prop1 | "
                     "region-sweep | oracle-compare | occam-check",
       MS_STR(experiment)},
      {"mu", "error rate of the good classifier c0", MS_NUM(mu, "mu")},
      {"mu_prime", "error rate of every bad classifier", MS_NUM(mu_prime, "mu_prime")},
      {"mu_hard", "error rate of bad classifiers on hard examples", MS_NUM(mu_hard, "mu_hard")},
      {"bayes.mu_hard", "mu_hard used for the full-Bayes sample", MS_NUM(bayes_mu_hard, "bayes.mu_hard")},
      {"bayes.m_test", "fresh test points per Bayes estimate", MS_U64(bayes_m_test, "bayes.m_test")},
      {"bayes.enabled", "run full Bayes in the inconsistency experiment",
       [](ExperimentConfig& c, const json& j) { c.bayes_enabled = as_bool(j, "bayes.enabled"); },
       [](const ExperimentConfig& c) { return json(c.bayes_enabled); }},
      {"prior.classifier", "dyadic | universal | polynomial", MS_STR(classifier_prior)},
      {"prior.degree", "tail degree d of the polynomial prior", MS_NUM(prior_degree, "prior.degree")},
      {"prior.theta.alpha", "Beta alpha of the theta prior", MS_NUM(theta_alpha, "prior.theta.alpha")},
      {"prior.theta.beta", "Beta beta of the theta prior", MS_NUM(theta_beta, "prior.theta.beta")},
      {"prior.theta.floor", "uniform mixing weight of the theta prior",
       MS_NUM(theta_floor, "prior.theta.floor")},
      {"prior.theta.point", "theta of a point-mass prior; negative disables",
       MS_NUM(theta_point, "prior.theta.point")},
      {"m_list", "sample sizes, JSON list or comma list; empty uses the experiment default",
       [](ExperimentConfig& c, const json& j) { c.m_list = as_m_list(j); },
       [](const ExperimentConfig& c) { return json(c.m_list); }},
      {"trials", "trials per sample size; 0 uses the experiment default", MS_U64(trials, "trials")},
      {"seed", "base seed", MS_U64(seed, "seed")},
      {"mode", "auto | explicit | aggregated (auto: explicit below m = 64)",
       [](ExperimentConfig& c, const json& j) {
         const std::string s = as_string(j);
         if (s == "auto") c.mode = SampleMode::kAuto;
         else if (s == "explicit") c.mode = SampleMode::kExplicit;
         else if (s == "aggregated") c.mode = SampleMode::kAggregated;
         else throw ConfigError("config key 'mode': unknown mode '" + s + "'");
       },
       [](const ExperimentConfig& c) { return json(mode_name(c.mode)); }},
      {"out_dir", "output directory", MS_STR(out_dir)},
      {"n_max", "last sampled prior block; 0 uses the sampler default", MS_U64(n_max, "n_max")},
      {"num_bad", "bad classifiers K in explicit mode; 0 derives it from n_max",
       MS_U64(num_bad, "num_bad")},
      {"delta", "confidence / slack parameter", MS_NUM(delta, "delta")},
      {"lemma1.alpha", "alpha of the evidence sandwich", MS_NUM(lemma1_alpha, "lemma1.alpha")},
      {"occam.classifiers", "classifiers in the Occam toy problem",
       MS_U64(occam_classifiers, "occam.classifiers")},
      {"sequential.prune_bits", "relative weight (bits) below which sequential cells are dropped",
       MS_NUM(prune_bits, "sequential.prune_bits")},
      {"threads", "worker threads; 0 uses all cores", MS_U64(threads, "threads")},
  };
  return defs;
}

#undef MS_NUM
#undef MS_U64
#undef MS_STR

const KeyDef& find_key(const std::string& key) {
  for (const KeyDef& d : key_defs())
    if (key == d.name) return d;
  throw ConfigError("unknown config key '" + key + "'");
}

// ---------------------------------------------------------------- helpers

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::string kv(const std::string& k, double v) { return k + "=" + format_double(v); }
std::string kv(const std::string& k, std::uint64_t v) { return k + "=" + std::to_string(v); }

std::string join(const std::vector<std::string>& parts) {
  std::string s;
  for (const auto& p : parts) {
    if (!s.empty()) s += ';';
    s += p;
  }
  return s;
}

double three_sigma_floor(double target, std::uint64_t n) {
  return target - 3.0 * proportion_sigma(target, n);
}

std::uint64_t max_m(const ExperimentConfig& cfg) {
  const auto ms = cfg.resolved_m_list();
  return ms.empty() ? 0 : *std::max_element(ms.begin(), ms.end());
}

// Runs one job per (m, trial) and flattens the rows in job order.
std::vector<TrialRecord> run_jobs(
    const ExperimentConfig& cfg, const std::vector<std::pair<std::uint64_t, std::uint64_t>>& jobs,
    const std::function<std::vector<TrialRecord>(std::uint64_t m, std::uint64_t t)>& body) {
  std::vector<std::vector<TrialRecord>> slots(jobs.size());
  std::atomic<std::uint64_t> done{0};
  std::mutex log_mu;
  const std::uint64_t step = std::max<std::uint64_t>(1, jobs.size() / 10);
  parallel_for(jobs.size(), cfg.threads, [&](std::uint64_t i) {
    slots[i] = body(jobs[i].first, jobs[i].second);
    const std::uint64_t d = ++done;
    if (cfg.progress && (d % step == 0 || d == jobs.size())) {
      std::lock_guard<std::mutex> lock(log_mu);
      std::cerr << "[" << cfg.experiment << "] " << d << "/" << jobs.size() << " trials\n";
    }
  });
  std::vector<TrialRecord> rows;
  for (auto& s : slots)
    for (auto& r : s) rows.push_back(std::move(r));
  return rows;
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> grid_jobs(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> jobs;
  for (std::uint64_t m : cfg.resolved_m_list())
    for (std::uint64_t t = 0; t < cfg.resolved_trials(); ++t) jobs.emplace_back(m, t);
  return jobs;
}

void sort_rows(std::vector<TrialRecord>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const TrialRecord& a, const TrialRecord& b) {
    return std::tie(a.variant, a.m, a.trial, a.algorithm) <
           std::tie(b.variant, b.m, b.trial, b.algorithm);
  });
}

struct SampledSet {
  HypothesisSet set;
  bool n_max_warning = false;
  std::uint32_t n_max = 0;
  std::uint64_t num_bad = 0;
};

SampledSet draw_set(const ExperimentConfig& cfg, const ProblemSpec& spec,
                    const ClassifierPrior& prior, std::uint64_t m, std::uint64_t seed,
                    bool include_tail) {
  SampledSet out;
  if (cfg.mode_for(m) == SampleMode::kExplicit) {
    out.num_bad = cfg.explicit_num_bad(m);
    const ExplicitSample s = sample_explicit(spec, m, out.num_bad, seed);
    out.set = make_hypotheses(s, prior);
  } else {
    const AggregatedSample a = sample_aggregated(spec, m, prior, cfg.n_max, seed);
    out.n_max = a.n_max;
    out.n_max_warning = a.n_max_warning;
    out.set = make_hypotheses(a, prior, include_tail);
  }
  return out;
}

std::string truncation_detail(const SampledSet& s) {
  return s.num_bad != 0 ? kv("num_bad", s.num_bad) : kv("n_max", std::uint64_t{s.n_max});
}

TrialRecord base_record(const ExperimentConfig& cfg, std::uint64_t m, std::uint64_t t,
                        std::uint64_t seed) {
  TrialRecord r;
  r.experiment = cfg.experiment;
  r.m = m;
  r.trial = t;
  r.seed = seed;
  return r;
}

std::vector<TrialRecord> selector_rows(const ExperimentConfig& cfg, const ProblemSpec& spec,
                                       std::uint64_t m, std::uint64_t t, std::uint64_t seed,
                                       const SampledSet& s, const EvidenceTable& table,
                                       const std::vector<Algorithm>& algorithms) {
  std::vector<TrialRecord> rows;
  const bool zero = zero_error_event(s.set, spec);
  const HypothesisGroup& good = s.set.groups.front();
  for (Algorithm a : algorithms) {
    const Stopwatch sw;
    LearnerResult r = select(a, s.set, table);
    attach_true_error(r, spec);
    TrialRecord rec = base_record(cfg, m, t, seed);
    rec.algorithm = algorithm_name(a);
    rec.selected = r.selected;
    rec.empirical_error = r.empirical_error;
    rec.true_error = r.true_error;
    rec.true_error_lo = r.true_error_lo;
    rec.true_error_hi = r.true_error_hi;
    rec.score_bits = r.score;
    rec.zero_error_event = zero;
    const double c0 = selector_score(a, table, good.log2_prior_first, good.errors);
    rec.detail = join({kv("block", std::uint64_t{r.block}), kv("errors", r.errors),
                       kv("m_hard", s.set.m_hard), kv("c0_score", c0), kv("margin", c0 - r.score),
                       truncation_detail(s)});
    rec.wall_ms = sw.ms();
    rows.push_back(std::move(rec));
  }
  return rows;
}

const RunResult& add_summary(RunResult& res, double mu, double mu_prime) {
  sort_rows(res.rows);
  res.summary = summarize(res.rows, mu, mu_prime);
  return res;
}

const SummaryRow* find_summary(const RunResult& res, const std::string& variant, std::uint64_t m,
                               const std::string& algorithm) {
  for (const SummaryRow& s : res.summary)
    if (s.variant == variant && s.m == m && s.algorithm == algorithm) return &s;
  return nullptr;
}

void count_warnings(RunResult& res, std::uint64_t n_max_warnings) {
  if (n_max_warnings > 0)
    res.warnings.push_back("n_max too small for a zero-error classifier with probability 1-1e-6 in " +
                           std::to_string(n_max_warnings) + " samples");
}

// ---------------------------------------------------------------- csv

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : ""; }
std::string opt(const std::optional<bool>& v) { return v ? (*v ? "1" : "0") : ""; }

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      out.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (any) {
    row.push_back(std::move(field));
    out.push_back(std::move(row));
  }
  return out;
}

std::optional<double> parse_opt_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  if (s == "nan") return std::nan("");
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::invalid_argument("rows.csv: bad number '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::invalid_argument("rows.csv: bad integer '" + s + "'");
  return v;
}

const char* const kRowColumns[] = {"experiment",    "variant",       "m",
                                   "trial",         "seed",          "algorithm",
                                   "selected",      "empirical_error", "true_error",
                                   "true_error_lo", "true_error_hi", "score_bits",
                                   "zero_error_event", "detail"};

std::string iso_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- config

ProblemSpec ExperimentConfig::problem() const {
  try {
    return ProblemSpec::make(mu, mu_prime, mu_hard);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ProblemSpec ExperimentConfig::bayes_problem() const {
  try {
    return ProblemSpec::make(mu, mu_prime, bayes_mu_hard);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("bayes.mu_hard: ") + e.what());
  }
}

ClassifierPrior ExperimentConfig::make_classifier_prior() const {
  if (classifier_prior == "dyadic") return ClassifierPrior::dyadic_block();
  if (classifier_prior == "universal") return ClassifierPrior::universal_integers();
  if (classifier_prior == "polynomial") {
    if (!(prior_degree >= 1.0)) throw ConfigError("prior.degree must be >= 1");
    return ClassifierPrior::polynomial_tail(prior_degree);
  }
  throw ConfigError("prior.classifier: unknown prior '" + classifier_prior + "'");
}

ThetaPrior ExperimentConfig::make_theta_prior() const {
  try {
    if (theta_point >= 0.0) return ThetaPrior::point_mass(theta_point);
    if (theta_alpha == 1.0 && theta_beta == 1.0 && theta_floor == 0.0) return ThetaPrior::uniform();
    return ThetaPrior::beta(theta_alpha, theta_beta, theta_floor);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("prior.theta: ") + e.what());
  }
}

std::vector<std::uint64_t> ExperimentConfig::resolved_m_list() const {
  if (!m_list.empty()) return m_list;
  if (experiment == "inconsistency")
    return {16, 32, 64, 128, 256, 512, 1024, 2048, 4096};
  if (experiment == "orb-consistency") return {1024, 4096, 16384};
  if (experiment == "sequential") return {2000};
  if (experiment == "lemma1") return {50, 100, 200, 400, 800, 1000};
  if (experiment == "prop1") return {0};
  if (experiment == "region-sweep") return {4096};
  if (experiment == "oracle-compare") return {16, 32};
  if (experiment == "occam-check") return {100};
  return {};
}

std::uint64_t ExperimentConfig::resolved_trials() const {
  if (trials != 0) return trials;
  if (experiment == "oracle-compare") return 200;
  if (experiment == "occam-check") return 1000;
  if (experiment == "prop1") return 5;
  if (experiment == "region-sweep") return 20;
  return 50;
}

SampleMode ExperimentConfig::mode_for(std::uint64_t m) const {
  if (mode != SampleMode::kAuto) return mode;
  return m < 64 ? SampleMode::kExplicit : SampleMode::kAggregated;
}

std::uint64_t ExperimentConfig::explicit_num_bad(std::uint64_t m) const {
  if (num_bad != 0) return num_bad;
  const ProblemSpec spec = problem();
  std::uint32_t n = n_max;
  if (n == 0) {
    const auto m_hard = static_cast<std::uint64_t>(std::ceil(static_cast<double>(m) * spec.p_hard()));
    n = default_n_max(spec, m_hard);
  }
  return (std::uint64_t{1} << std::min<std::uint32_t>(n, 16)) - 1;
}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {
      "inconsistency", "orb-consistency", "sequential",     "lemma1",
      "prop1",         "region-sweep",    "oracle-compare", "occam-check"};
  return names;
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig cfg;
  for (const auto& [key, value] : j.items()) find_key(key).set(cfg, value);
  cfg.source_text = json_text;
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const KeyDef& def = find_key(key);
  json j;
  try {
    j = json::parse(value);
  } catch (const json::parse_error&) {
    j = value;
  }
  def.set(cfg, j);
  cfg.overrides.push_back(key + "=" + value);
}

void validate(const ExperimentConfig& cfg) {
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), cfg.experiment) == names.end())
    throw ConfigError("unknown experiment '" + cfg.experiment + "'");
  cfg.problem();
  if (cfg.experiment == "inconsistency" && cfg.bayes_enabled) cfg.bayes_problem();
  cfg.make_classifier_prior();
  const ThetaPrior theta = cfg.make_theta_prior();
  const auto ms = cfg.resolved_m_list();
  if (ms.empty()) throw ConfigError("m_list is empty");
  for (std::uint64_t m : ms) {
    if (m == 0 && cfg.experiment != "prop1") throw ConfigError("m_list entries must be >= 1");
    if (m > (std::uint64_t{1} << 22)) throw ConfigError("m_list entries must be <= 4194304");
  }
  if (cfg.resolved_trials() == 0) throw ConfigError("trials must be >= 1");
  if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (!(cfg.lemma1_alpha > 0.0 && cfg.lemma1_alpha < 0.5))
    throw ConfigError("lemma1.alpha must lie in (0, 0.5)");
  if (cfg.experiment == "lemma1" && !(theta.density_floor() > 0.0))
    throw ConfigError("lemma1 needs a theta prior with a positive density floor");
  if (cfg.occam_classifiers == 0) throw ConfigError("occam.classifiers must be >= 1");
  if (cfg.n_max > 65536) throw ConfigError("n_max must be <= 65536");
  if (cfg.num_bad > (std::uint64_t{1} << 24)) throw ConfigError("num_bad must be <= 2^24");
  if (!(cfg.prune_bits > 0.0)) throw ConfigError("sequential.prune_bits must be > 0");
  if (cfg.out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

std::string canonical_json(const ExperimentConfig& cfg) {
  json j = json::object();
  for (const KeyDef& d : key_defs()) j[d.name] = d.get(cfg);
  j["m_list"] = cfg.resolved_m_list();
  j["trials"] = cfg.resolved_trials();
  return j.dump();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) { return fnv1a64(canonical_json(cfg)); }

std::string config_help() {
  const ExperimentConfig defaults;
  std::string s;
  for (const KeyDef& d : key_defs()) {
    std::string name = d.name;
    name.resize(std::max<std::size_t>(name.size(), 22), ' ');
    std::string def = d.get(defaults).dump();
    s += "  " + name + " " + d.help + " (default " + def + ")\n";
  }
  return s;
}

// ---------------------------------------------------------------- results

bool RunResult::hard_failure() const {
  return std::any_of(checks.begin(), checks.end(),
                     [](const Check& c) { return c.hard && !c.passed; });
}

bool RunResult::statistical_failure() const {
  return std::any_of(checks.begin(), checks.end(),
                     [](const Check& c) { return !c.hard && !c.passed; });
}

std::vector<SummaryRow> summarize(const std::vector<TrialRecord>& rows, double mu,
                                  double mu_prime) {
  struct Acc {
    std::uint64_t rows = 0, n_emp = 0, n_true = 0, n_zero = 0, n_score = 0;
    double emp = 0.0, truth = 0.0, score = 0.0;
    std::uint64_t at_mu = 0, at_mu_prime = 0, zero = 0;
  };
  std::map<std::tuple<std::string, std::uint64_t, std::string>, Acc> acc;
  for (const TrialRecord& r : rows) {
    Acc& a = acc[{r.variant, r.m, r.algorithm}];
    ++a.rows;
    if (r.empirical_error) {
      ++a.n_emp;
      a.emp += *r.empirical_error;
    }
    if (r.true_error) {
      ++a.n_true;
      a.truth += *r.true_error;
      a.at_mu += *r.true_error == mu;
      a.at_mu_prime += *r.true_error == mu_prime;
    }
    if (r.zero_error_event) {
      ++a.n_zero;
      a.zero += *r.zero_error_event;
    }
    if (r.score_bits) {
      ++a.n_score;
      a.score += *r.score_bits;
    }
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, a] : acc) {
    SummaryRow s;
    std::tie(s.variant, s.m, s.algorithm) = key;
    s.rows = a.rows;
    const auto mean = [](double total, std::uint64_t n) -> std::optional<double> {
      if (n == 0) return std::nullopt;
      return total / static_cast<double>(n);
    };
    s.mean_empirical_error = mean(a.emp, a.n_emp);
    s.mean_true_error = mean(a.truth, a.n_true);
    s.frac_true_mu = mean(static_cast<double>(a.at_mu), a.n_true);
    s.frac_true_mu_prime = mean(static_cast<double>(a.at_mu_prime), a.n_true);
    s.frac_zero_error = mean(static_cast<double>(a.zero), a.n_zero);
    s.mean_score_bits = mean(a.score, a.n_score);
    out.push_back(std::move(s));
  }
  return out;
}

void parallel_for(std::uint64_t n, unsigned threads,
                  const std::function<void(std::uint64_t)>& body) {
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, std::max<std::uint64_t>(n, 1)));
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  const auto worker = [&] {
    for (;;) {
      const std::uint64_t i = next++;
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        next = n;
        return;
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

std::uint64_t trial_seed(std::uint64_t base, const std::string& experiment, std::uint64_t m,
                         std::uint64_t trial) {
  return derive_seed(base, StreamKey{fnv1a64(experiment), trial, m});
}

// ---------------------------------------------------------------- runners

RunResult run_inconsistency(const ExperimentConfig& cfg) {
  const ProblemSpec spec = cfg.problem();
  const ClassifierPrior prior = cfg.make_classifier_prior();
  const ThetaPrior theta = cfg.make_theta_prior();
  const std::vector<Algorithm> algorithms = {Algorithm::kMap, Algorithm::kSmap, Algorithm::kMdl,
                                             Algorithm::kOrb};
  std::atomic<std::uint64_t> warned{0};

  RunResult res;
  res.rows = run_jobs(cfg, grid_jobs(cfg), [&](std::uint64_t m, std::uint64_t t) {
    const std::uint64_t seed = trial_seed(cfg.seed, cfg.experiment, m, t);
    const SampledSet s = draw_set(cfg, spec, prior, m, seed, false);
    warned += s.n_max_warning;
    const EvidenceTable table(m, theta);
    std::vector<TrialRecord> rows = selector_rows(cfg, spec, m, t, seed, s, table, algorithms);
    if (cfg.bayes_enabled) {
      const Stopwatch sw;
      const ProblemSpec bspec = cfg.bayes_problem();
      const std::uint64_t bseed = derive_seed(seed, StreamKey{fnv1a64("bayes"), 0, 0});
      const SampledSet b = draw_set(cfg, bspec, prior, m, bseed, true);
      warned += b.n_max_warning;
      const BayesPredictor predictor(b.set, table);
      const GeneralizationEstimate g = bayes_generalization(
          predictor, bspec, cfg.bayes_m_test, derive_seed(seed, StreamKey{fnv1a64("test"), 0, 0}));
      TrialRecord rec = base_record(cfg, m, t, seed);
      rec.algorithm = algorithm_name(Algorithm::kBayes);
      rec.selected = "predictive";
      rec.empirical_error = predictor.posterior_mean_error();
      rec.true_error = g.estimate;
      rec.true_error_lo = g.lo;
      rec.true_error_hi = g.hi;
      rec.score_bits = -predictor.log2_evidence();
      rec.zero_error_event = zero_error_event(b.set, bspec);
      const double hard_rate = g.hard_points == 0 ? 0.0
                                                  : static_cast<double>(g.hard_errors) /
                                                        static_cast<double>(g.hard_points);
      rec.detail = join({kv("mu_hard", bspec.mu_hard), kv("posterior_good", predictor.posterior_good()),
                         kv("hard_error_rate", hard_rate), kv("m_test", g.n), truncation_detail(b)});
      rec.wall_ms = sw.ms();
      rows.push_back(std::move(rec));
    }
    return rows;
  });
  add_summary(res, spec.mu, spec.mu_prime);
  count_warnings(res, warned);

  if (!spec.inconsistency_regime())
    res.warnings.push_back("mu_prime >= H(mu)/2: outside the inconsistency regime");
  const std::uint64_t m_top = max_m(cfg);
  const std::uint64_t trials = cfg.resolved_trials();
  if (spec.inconsistency_regime()) {
    const double floor = three_sigma_floor(0.95, trials);
    for (Algorithm a : {Algorithm::kMap, Algorithm::kSmap, Algorithm::kMdl}) {
      const SummaryRow* s = find_summary(res, "", m_top, algorithm_name(a));
      const double f = s && s->frac_true_mu_prime ? *s->frac_true_mu_prime : 0.0;
      res.checks.push_back({algorithm_name(a) + " suboptimal at m=" + std::to_string(m_top), false,
                            f >= floor, kv("fraction", f) + ";" + kv("threshold", floor)});
    }
    const SummaryRow* s = find_summary(res, "", m_top, "MAP");
    const double z = s && s->frac_zero_error ? *s->frac_zero_error : 0.0;
    res.checks.push_back({"zero-error event at m=" + std::to_string(m_top), false, z >= floor,
                          kv("fraction", z) + ";" + kv("threshold", floor)});
  }
  if (cfg.bayes_enabled) {
    const SummaryRow* s = find_summary(res, "", m_top, "BAYES");
    const double e = s && s->mean_true_error ? *s->mean_true_error : 0.0;
    const double lo = spec.mu_prime - 0.02, hi = binary_entropy(spec.mu) + 0.02;
    res.checks.push_back({"BAYES error interval at m=" + std::to_string(m_top), false,
                          e >= lo && e <= hi,
                          kv("estimate", e) + ";" + kv("lo", lo) + ";" + kv("hi", hi)});
  }
  return res;
}

RunResult run_orb(const ExperimentConfig& cfg) {
  const ProblemSpec spec = cfg.problem();
  const ClassifierPrior prior = cfg.make_classifier_prior();
  const ThetaPrior theta = cfg.make_theta_prior();
  std::atomic<std::uint64_t> warned{0};

  RunResult res;
  res.rows = run_jobs(cfg, grid_jobs(cfg), [&](std::uint64_t m, std::uint64_t t) {
    const std::uint64_t seed = trial_seed(cfg.seed, cfg.experiment, m, t);
    const SampledSet s = draw_set(cfg, spec, prior, m, seed, false);
    warned += s.n_max_warning;
    const EvidenceTable table(m, theta);
    return selector_rows(cfg, spec, m, t, seed, s, table, {Algorithm::kOrb});
  });
  add_summary(res, spec.mu, spec.mu_prime);
  count_warnings(res, warned);

  const std::uint64_t m_top = max_m(cfg);
  const double floor = three_sigma_floor(0.95, cfg.resolved_trials());
  const SummaryRow* s = find_summary(res, "", m_top, "ORB");
  const double f = s && s->frac_true_mu ? *s->frac_true_mu : 0.0;
  res.checks.push_back({"ORB optimal at m=" + std::to_string(m_top), false, f >= floor,
                        kv("fraction", f) + ";" + kv("threshold", floor)});

  // A zero-error bad classifier sits near -log2 P = m_hard * (-log2(1 - mu_hard)).
  const double md = static_cast<double>(m_top);
  const double bits = spec.mu_hard < 1.0 ? md * spec.p_hard() * -std::log2(1.0 - spec.mu_hard)
                                         : std::numeric_limits<double>::infinity();
  const double bad = std::sqrt((bits * kLn2 + std::log(md)) / (2.0 * md));
  const double good = spec.mu + std::sqrt((-prior.log2_prior(0) * kLn2 + std::log(md)) / (2.0 * md));
  res.checks.push_back({"ORB bad penalty exceeds c0 objective", false, bad > good,
                        kv("bad_penalty", bad) + ";" + kv("c0_objective", good) + ";" +
                            kv("sqrt_mu_prime_ln2", std::sqrt(spec.mu_prime * kLn2))});
  return res;
}

RunResult run_sequential(const ExperimentConfig& cfg) {
  const ProblemSpec spec = cfg.problem();
  const ClassifierPrior prior = cfg.make_classifier_prior();
  const ThetaPrior theta = cfg.make_theta_prior();
  SequentialOptions opts;
  opts.prune_bits = cfg.prune_bits;

  RunResult res;
  res.rows = run_jobs(cfg, grid_jobs(cfg), [&](std::uint64_t m, std::uint64_t t) {
    const std::uint64_t seed = trial_seed(cfg.seed, cfg.experiment, m, t);
    const Stopwatch sw;
    SequentialResult r;
    std::string truncation;
    if (cfg.mode_for(m) == SampleMode::kExplicit) {
      const std::uint64_t k = cfg.explicit_num_bad(m);
      r = sequential_bayes(sample_explicit(spec, m, k, seed), prior, theta);
      truncation = kv("num_bad", k);
    } else {
      r = sequential_bayes_aggregated(spec, m, prior, theta, seed, opts);
      truncation = kv("prune_bits", opts.prune_bits);
    }
    TrialRecord rec = base_record(cfg, m, t, seed);
    rec.algorithm = "SEQUENTIAL";
    rec.selected = "predictive";
    rec.empirical_error = r.mistake_rate();
    rec.score_bits = r.total_log_loss;
    rec.detail = join({kv("mistakes", r.mistakes), kv("joint_log_loss", r.joint_log_loss),
                       kv("chain_rule_gap", r.chain_rule_gap),
                       kv("pruned_fraction", r.pruned_fraction), truncation});
    rec.wall_ms = sw.ms();
    return std::vector<TrialRecord>{std::move(rec)};
  });
  add_summary(res, spec.mu, spec.mu_prime);

  double worst_gap = 0.0;
  bool bounded = true;
  for (const TrialRecord& r : res.rows) {
    const auto pos = r.detail.find("chain_rule_gap=");
    const double gap = std::stod(r.detail.substr(pos + 15));
    worst_gap = std::max(worst_gap, std::fabs(gap));
    const double mistakes = *r.empirical_error * static_cast<double>(r.m);
    bounded = bounded && mistakes <= *r.score_bits + 1e-9;
  }
  res.checks.push_back({"chain rule within 1e-6 bits", true, worst_gap <= 1e-6,
                        kv("worst_gap", worst_gap)});
  res.checks.push_back({"mistakes <= cumulative log loss", true, bounded, ""});

  const std::uint64_t m_top = max_m(cfg);
  const double bound = binary_entropy(spec.mu) + cfg.delta;
  std::uint64_t ok = 0, n = 0;
  for (const TrialRecord& r : res.rows) {
    if (r.m != m_top) continue;
    ++n;
    ok += *r.empirical_error <= bound;
  }
  const double f = n == 0 ? 0.0 : static_cast<double>(ok) / static_cast<double>(n);
  const double floor = three_sigma_floor(0.98, n);
  res.checks.push_back({"mistake rate <= H(mu)+delta at m=" + std::to_string(m_top), false,
                        f >= floor,
                        kv("fraction", f) + ";" + kv("bound", bound) + ";" + kv("threshold", floor)});
  return res;
}

RunResult run_lemma1(const ExperimentConfig& cfg) {
  const ThetaPrior theta = cfg.make_theta_prior();
  const double gamma = theta.density_floor();
  const double alpha = cfg.lemma1_alpha;
  RunResult res;
  std::uint64_t cells = 0, inside = 0, first_ineq_violations = 0;
  for (std::uint64_t m : cfg.resolved_m_list()) {
    for (std::uint64_t a = 0; a <= m; ++a) {
      const double neg_evidence = -log_evidence_theta(theta, a, m);
      if (neg_evidence < -profile_loglik(a, m) - 1e-9) ++first_ineq_violations;
      if (!lemma1_applies(a, m, alpha)) continue;
      const SandwichBounds b = lemma1_sandwich(a, m, gamma, alpha);
      const bool in = b.lower <= neg_evidence && neg_evidence <= b.upper;
      ++cells;
      inside += in;
      TrialRecord rec = base_record(cfg, m, a, cfg.seed);
      rec.algorithm = "LEMMA1";
      rec.selected = "a=" + std::to_string(a);
      rec.empirical_error = static_cast<double>(a) / static_cast<double>(m);
      rec.score_bits = neg_evidence;
      rec.detail = join({kv("lower", b.lower), kv("upper", b.upper),
                         kv("inside", std::uint64_t{in})});
      res.rows.push_back(std::move(rec));
    }
  }
  add_summary(res, cfg.mu, cfg.mu_prime);
  res.checks.push_back({"evidence inside sandwich", true, inside == cells,
                        kv("cells", cells) + ";" + kv("inside", inside)});
  res.checks.push_back({"evidence <= maximised likelihood", true, first_ineq_violations == 0,
                        kv("violations", first_ineq_violations)});
  return res;
}

RunResult run_prop1(const ExperimentConfig& cfg) {
  constexpr std::size_t kInputs = 10, kClassifiers = 8;
  const double step = 0.01;
  RunResult res;
  bool argmin_ok = true, entropy_ok = true, zero_ok = true;
  std::uint64_t literal_checked = 0, literal_failed = 0;
  for (std::uint64_t t = 0; t < cfg.resolved_trials(); ++t) {
    for (int well = 0; well < 2; ++well) {
      Rng rng(cfg.seed, StreamKey{fnv1a64("prop1"), t, static_cast<std::uint64_t>(well)});
      const std::size_t c_star = t % kClassifiers;
      const double theta_star = static_cast<double>(10 + 5 * (t % 7)) / 100.0;
      const ToyProblem toy = well ? ToyProblem::well_specified(rng, kInputs, kClassifiers, c_star,
                                                               theta_star)
                                  : ToyProblem::random(rng, kInputs, kClassifiers);
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_c = 0;
      double min_err = 1.0, max_err = 0.0, min_entropy = 1.0;
      for (std::size_t c = 0; c < kClassifiers; ++c) {
        min_err = std::min(min_err, toy.true_error(c));
        max_err = std::max(max_err, toy.true_error(c));
        min_entropy = std::min(min_entropy, binary_entropy(toy.true_error(c)));
      }
      for (std::size_t c = 0; c < kClassifiers; ++c) {
        double c_best = std::numeric_limits<double>::infinity(), c_theta = 0.0;
        for (int k = 1; k <= 99; ++k) {
          const double th = static_cast<double>(k) / 100.0;
          const double d = kl_delta(toy, c, th);
          if (d < c_best) {
            c_best = d;
            c_theta = th;
          }
        }
        const double e = toy.true_error(c);
        const bool near = std::fabs(c_theta - e) <= step + 1e-12;
        argmin_ok = argmin_ok && near;
        if (c_best < best) {
          best = c_best;
          best_c = c;
        }
        TrialRecord rec = base_record(cfg, 0, t, cfg.seed);
        rec.variant = well ? "well-specified" : "random";
        rec.algorithm = "PROP1";
        rec.selected = "c" + std::to_string(c);
        rec.true_error = e;
        rec.score_bits = c_best;
        rec.detail = join({kv("theta_argmin", c_theta), kv("near", std::uint64_t{near})});
        res.rows.push_back(std::move(rec));
      }
      // The minimum over theta is H(e_D(c)) - K_D, so the winner minimises H(e_D(c)); that is
      // the min-error classifier unless some classifier errs more often than 1 - e_D(c*).
      entropy_ok = entropy_ok &&
                   binary_entropy(toy.true_error(best_c)) <= min_entropy + 1e-9;
      if (min_err < 0.5) {
        ++literal_checked;
        literal_failed += toy.true_error(best_c) > min_err + 1e-12;
      }
      if (max_err > 1.0 - min_err)
        res.warnings.push_back("toy " + std::to_string(t) + (well ? " (well-specified)" : "") +
                               ": a classifier errs above 1 - e_D(c*), global argmin may differ");
      if (well) {
        zero_ok = zero_ok && kl_delta(toy, c_star, theta_star) <= 1e-12;
      } else {
        zero_ok = zero_ok && best > 1e-12;
      }
    }
  }
  add_summary(res, cfg.mu, cfg.mu_prime);
  res.checks.push_back({"theta argmin within one grid step of e_D(c)", true, argmin_ok, ""});
  res.checks.push_back({"global argmin minimises H(e_D(c))", true, entropy_ok, ""});
  res.checks.push_back({"global argmin at the min-error classifier", false, literal_failed == 0,
                        kv("toys", literal_checked) + ";" + kv("failed", literal_failed)});
  res.checks.push_back({"zero divergence iff well-specified", true, zero_ok, ""});
  return res;
}

RunResult run_region_sweep(const ExperimentConfig& cfg) {
  const ClassifierPrior prior = cfg.make_classifier_prior();
  const ThetaPrior theta = cfg.make_theta_prior();
  const std::uint64_t m = max_m(cfg);
  const std::uint64_t trials = cfg.resolved_trials();
  struct Point {
    ProblemSpec spec;
    std::string variant;
  };
  std::vector<Point> points;
  for (int i = 1; i <= 9; ++i) {
    const double mu = i / 20.0;
    const double mu_prime = std::max(0.9 * 0.5 * binary_entropy(mu), mu);
    ExperimentConfig c = cfg;
    c.mu = mu;
    c.mu_prime = mu_prime;
    points.push_back({c.problem(), "mu=" + format_double(mu)});
  }
  std::vector<std::pair<std::uint64_t, std::uint64_t>> jobs;
  for (std::uint64_t p = 0; p < points.size(); ++p)
    for (std::uint64_t t = 0; t < trials; ++t) jobs.emplace_back(p, t);
  std::atomic<std::uint64_t> warned{0};

  RunResult res;
  res.rows = run_jobs(cfg, jobs, [&](std::uint64_t p, std::uint64_t t) {
    const Point& pt = points[p];
    const std::uint64_t seed = trial_seed(cfg.seed, cfg.experiment + "/" + pt.variant, m, t);
    const SampledSet s = draw_set(cfg, pt.spec, prior, m, seed, false);
    warned += s.n_max_warning;
    const EvidenceTable table(m, theta);
    auto rows = selector_rows(cfg, pt.spec, m, t, seed, s, table, {Algorithm::kMap});
    for (auto& r : rows) r.variant = pt.variant;
    return rows;
  });
  sort_rows(res.rows);
  count_warnings(res, warned);
  bool inside = true;
  for (const Point& pt : points) {
    double total = 0.0;
    std::uint64_t n = 0;
    for (const TrialRecord& r : res.rows) {
      if (r.variant != pt.variant) continue;
      total += *r.true_error;
      ++n;
    }
    RegionRow row;
    row.mu = pt.spec.mu;
    row.lower_curve = 0.5 * binary_entropy(pt.spec.mu);
    row.upper_curve = binary_entropy(pt.spec.mu);
    row.mu_prime = pt.spec.mu_prime;
    row.observed_map_error = total / static_cast<double>(n);
    inside = inside && ((row.observed_map_error >= row.mu - 1e-12 &&
                         row.observed_map_error <= row.lower_curve + 1e-12) ||
                        row.observed_map_error == row.mu_prime);
    res.region.push_back(row);
  }
  // Fractions against each point's own mu and mu_prime.
  for (const Point& pt : points) {
    std::vector<TrialRecord> part;
    for (const TrialRecord& r : res.rows)
      if (r.variant == pt.variant) part.push_back(r);
    for (SummaryRow& s : summarize(part, pt.spec.mu, pt.spec.mu_prime))
      res.summary.push_back(std::move(s));
  }
  res.checks.push_back({"observed MAP error inside the allowed region", true, inside, ""});
  return res;
}

RunResult run_oracle_compare(const ExperimentConfig& cfg) {
  const ProblemSpec spec = cfg.problem();
  const ClassifierPrior prior = cfg.make_classifier_prior();
  const ThetaPrior theta = cfg.make_theta_prior();
  const std::uint64_t k = cfg.num_bad != 0 ? cfg.num_bad : (std::uint64_t{1} << 12) - 1;
  const std::uint32_t blocks = ClassifierPrior::block_of(k);
  if ((std::uint64_t{1} << blocks) - 1 != k)
    throw ConfigError("oracle-compare needs num_bad = 2^n - 1 (whole blocks)");

  RunResult res;
  res.rows = run_jobs(cfg, grid_jobs(cfg), [&](std::uint64_t m, std::uint64_t t) {
    const std::uint64_t seed = trial_seed(cfg.seed, cfg.experiment, m, t);
    const std::uint64_t aseed = derive_seed(seed, StreamKey{fnv1a64("aggregated"), 0, 0});
    const EvidenceTable table(m, theta);
    std::vector<TrialRecord> rows;
    for (int agg = 0; agg < 2; ++agg) {
      const Stopwatch sw;
      HypothesisSet set;
      std::vector<std::uint64_t> min_h(blocks, ~std::uint64_t{0});
      if (agg) {
        const AggregatedSample a = sample_aggregated(spec, m, prior, blocks, aseed);
        set = make_hypotheses(a, prior, false);
        for (const BlockCells& b : a.blocks) {
          for (const SampledCell& c : b.cells)
            if (!c.exact || c.count > 0) min_h[b.block - 1] = std::min<std::uint64_t>(min_h[b.block - 1], c.h);
          for (const DetRange& r : b.ranges)
            min_h[b.block - 1] = std::min<std::uint64_t>(min_h[b.block - 1], r.h_lo);
        }
      } else {
        const ExplicitSample e = sample_explicit(spec, m, k, seed);
        set = make_hypotheses(e, prior);
        for (std::uint64_t j = 1; j <= k; ++j) {
          auto& slot = min_h[ClassifierPrior::block_of(j) - 1];
          slot = std::min(slot, e.bad_error_count(j));
        }
      }
      LearnerResult r = select(Algorithm::kMdl, set, table);
      attach_true_error(r, spec);
      std::string mins;
      std::uint64_t zero_block = 0;
      for (std::uint32_t n = 0; n < blocks; ++n) {
        if (n) mins += ',';
        mins += std::to_string(min_h[n]);
        if (zero_block == 0 && min_h[n] == 0) zero_block = n + 1;
      }
      TrialRecord rec = base_record(cfg, m, t, agg ? aseed : seed);
      rec.algorithm = agg ? "AGGREGATED" : "EXPLICIT";
      rec.selected = r.selected;
      rec.empirical_error = r.empirical_error;
      rec.true_error = r.true_error;
      rec.true_error_lo = r.true_error_lo;
      rec.true_error_hi = r.true_error_hi;
      rec.score_bits = r.score;
      rec.zero_error_event = zero_error_event(set, spec);
      rec.detail = join({kv("m_hard", set.m_hard), kv("good_errors", set.groups[0].errors),
                         "min_h=" + mins, kv("zero_block", zero_block)});
      rec.wall_ms = sw.ms();
      rows.push_back(std::move(rec));
    }
    return rows;
  });
  add_summary(res, spec.mu, spec.mu_prime);

  const auto field = [](const std::string& detail, const std::string& key) {
    const auto pos = detail.find(key + "=");
    const auto start = pos + key.size() + 1;
    return detail.substr(start, detail.find(';', start) - start);
  };
  for (std::uint64_t m : cfg.resolved_m_list()) {
    using Hist = std::map<std::int64_t, std::uint64_t>;
    std::map<std::string, std::pair<Hist, Hist>> stats;
    for (const TrialRecord& r : res.rows) {
      if (r.m != m) continue;
      const bool agg = r.algorithm == "AGGREGATED";
      const auto add = [&](const std::string& name, std::int64_t key) {
        auto& h = agg ? stats[name].second : stats[name].first;
        ++h[key];
      };
      add("m_hard", std::stoll(field(r.detail, "m_hard")));
      add("good_errors", std::stoll(field(r.detail, "good_errors")));
      add("zero_block", std::stoll(field(r.detail, "zero_block")));
      add("mdl_true_error", *r.true_error == spec.mu ? 0 : 1);
      std::stringstream ss(field(r.detail, "min_h"));
      std::string item;
      std::int64_t n = 0;
      while (std::getline(ss, item, ','))
        add("block_min_h", n++ * static_cast<std::int64_t>(m + 2) + std::stoll(item));
    }
    for (const auto& [name, h] : stats) {
      const ChiSquareResult c = chi_square_two_sample(h.first, h.second);
      res.checks.push_back({name + " explicit vs aggregated at m=" + std::to_string(m), false,
                            c.p_value > 0.01,
                            kv("chi2", c.statistic) + ";" + kv("dof", std::uint64_t(c.dof)) + ";" +
                                kv("p", c.p_value)});
    }
  }
  return res;
}

RunResult run_occam_check(const ExperimentConfig& cfg) {
  RunResult res;
  const std::size_t k = cfg.occam_classifiers;
  const std::vector<double> prior(k, 1.0 / static_cast<double>(k));
  for (std::uint64_t m : cfg.resolved_m_list()) {
    const Stopwatch sw;
    Rng rng(cfg.seed, StreamKey{fnv1a64("occam"), m, 0});
    const ToyProblem toy = ToyProblem::random(rng, 16, k);
    const std::uint64_t seed = trial_seed(cfg.seed, cfg.experiment, m, 0);
    const OccamCheck c = occam_bound_check(toy, prior, m, cfg.delta, cfg.resolved_trials(), seed);
    TrialRecord rec = base_record(cfg, m, 0, seed);
    rec.algorithm = "OCCAM";
    rec.selected = std::to_string(k) + " classifiers";
    rec.empirical_error = c.fraction;
    rec.detail = join({kv("violations", c.violations), kv("trials", c.trials), kv("delta", cfg.delta),
                       kv("sigma", c.sigma)});
    rec.wall_ms = sw.ms();
    res.rows.push_back(std::move(rec));
    res.checks.push_back({"violation fraction <= delta + 3 sigma at m=" + std::to_string(m), false,
                          c.within_bound,
                          kv("fraction", c.fraction) + ";" +
                              kv("threshold", cfg.delta + 3.0 * c.sigma)});
  }
  add_summary(res, cfg.mu, cfg.mu_prime);
  return res;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  RunResult res;
  if (cfg.experiment == "inconsistency") res = run_inconsistency(cfg);
  else if (cfg.experiment == "orb-consistency") res = run_orb(cfg);
  else if (cfg.experiment == "sequential") res = run_sequential(cfg);
  else if (cfg.experiment == "lemma1") res = run_lemma1(cfg);
  else if (cfg.experiment == "prop1") res = run_prop1(cfg);
  else if (cfg.experiment == "region-sweep") res = run_region_sweep(cfg);
  else if (cfg.experiment == "oracle-compare") res = run_oracle_compare(cfg);
  else res = run_occam_check(cfg);

  bool in_range = true;
  for (const TrialRecord& r : res.rows)
    if (r.empirical_error && !(*r.empirical_error >= 0.0 && *r.empirical_error <= 1.0))
      in_range = false;
  res.checks.push_back({"empirical error within [0,1]", true, in_range, ""});
  return res;
}

// ---------------------------------------------------------------- output

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

std::string rows_csv(const std::vector<TrialRecord>& rows) {
  std::string s;
  for (std::size_t i = 0; i < std::size(kRowColumns); ++i) {
    if (i) s += ',';
    s += kRowColumns[i];
  }
  s += '\n';
  for (const TrialRecord& r : rows) {
    s += csv_field(r.experiment) + ',' + csv_field(r.variant) + ',' + std::to_string(r.m) + ',' +
         std::to_string(r.trial) + ',' + std::to_string(r.seed) + ',' + csv_field(r.algorithm) +
         ',' + csv_field(r.selected) + ',' + opt(r.empirical_error) + ',' + opt(r.true_error) +
         ',' + opt(r.true_error_lo) + ',' + opt(r.true_error_hi) + ',' + opt(r.score_bits) + ',' +
         opt(r.zero_error_event) + ',' + csv_field(r.detail) + '\n';
  }
  return s;
}

std::vector<TrialRecord> parse_rows_csv(const std::string& text) {
  const auto table = parse_csv(text);
  if (table.empty()) throw std::invalid_argument("rows.csv: missing header");
  const auto& header = table.front();
  if (header.size() != std::size(kRowColumns))
    throw std::invalid_argument("rows.csv: unexpected header");
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] != kRowColumns[i]) throw std::invalid_argument("rows.csv: unexpected column " + header[i]);
  std::vector<TrialRecord> rows;
  for (std::size_t i = 1; i < table.size(); ++i) {
    const auto& f = table[i];
    if (f.size() != header.size()) throw std::invalid_argument("rows.csv: ragged row");
    TrialRecord r;
    r.experiment = f[0];
    r.variant = f[1];
    r.m = parse_u64(f[2]);
    r.trial = parse_u64(f[3]);
    r.seed = parse_u64(f[4]);
    r.algorithm = f[5];
    r.selected = f[6];
    r.empirical_error = parse_opt_double(f[7]);
    r.true_error = parse_opt_double(f[8]);
    r.true_error_lo = parse_opt_double(f[9]);
    r.true_error_hi = parse_opt_double(f[10]);
    r.score_bits = parse_opt_double(f[11]);
    if (f[12] == "1") r.zero_error_event = true;
    else if (f[12] == "0") r.zero_error_event = false;
    else if (!f[12].empty()) throw std::invalid_argument("rows.csv: bad flag '" + f[12] + "'");
    r.detail = f[13];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string s =
      "variant,m,algorithm,rows,mean_empirical_error,mean_true_error,frac_true_mu,"
      "frac_true_mu_prime,frac_zero_error,mean_score_bits\n";
  for (const SummaryRow& r : rows) {
    s += csv_field(r.variant) + ',' + std::to_string(r.m) + ',' + csv_field(r.algorithm) + ',' +
         std::to_string(r.rows) + ',' + opt(r.mean_empirical_error) + ',' + opt(r.mean_true_error) +
         ',' + opt(r.frac_true_mu) + ',' + opt(r.frac_true_mu_prime) + ',' +
         opt(r.frac_zero_error) + ',' + opt(r.mean_score_bits) + '\n';
  }
  return s;
}

std::string region_csv(const std::vector<RegionRow>& rows) {
  std::string s = "mu,lower_curve,upper_curve,mu_prime,observed_map_error\n";
  for (const RegionRow& r : rows)
    s += format_double(r.mu) + ',' + format_double(r.lower_curve) + ',' +
         format_double(r.upper_curve) + ',' + format_double(r.mu_prime) + ',' +
         format_double(r.observed_map_error) + '\n';
  return s;
}

std::string timing_csv(const std::vector<TrialRecord>& rows) {
  std::string s = "experiment,variant,m,trial,algorithm,wall_ms\n";
  for (const TrialRecord& r : rows)
    s += csv_field(r.experiment) + ',' + csv_field(r.variant) + ',' + std::to_string(r.m) + ',' +
         std::to_string(r.trial) + ',' + csv_field(r.algorithm) + ',' + format_double(r.wall_ms) +
         '\n';
  return s;
}

std::string meta_json(const ExperimentConfig& cfg, const RunResult& result) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["code_version"] = MISSPEC_VERSION;
  j["experiment"] = cfg.experiment;
  j["seed"] = cfg.seed;
  j["config"] = json::parse(canonical_json(cfg));
  j["config_source"] = cfg.source_text;
  j["config_overrides"] = cfg.overrides;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
  j["config_hash"] = hash;
  const ProblemSpec spec = cfg.problem();
  j["problem"] = {{"mu", spec.mu},
                  {"mu_prime", spec.mu_prime},
                  {"mu_hard", spec.mu_hard},
                  {"p_hard", spec.p_hard()},
                  {"inconsistency_regime", spec.inconsistency_regime()}};
  j["priors"] = {{"classifier", cfg.make_classifier_prior().description()},
                 {"theta", cfg.make_theta_prior().name()}};
  json trunc = json::object();
  for (std::uint64_t m : cfg.resolved_m_list()) {
    if (m == 0) continue;
    json t;
    t["mode"] = mode_name(cfg.mode_for(m));
    if (cfg.mode_for(m) == SampleMode::kExplicit) {
      t["num_bad"] = cfg.explicit_num_bad(m);
    } else {
      const auto m_hard = static_cast<std::uint64_t>(std::llround(static_cast<double>(m) * spec.p_hard()));
      t["n_max"] = cfg.n_max != 0 ? cfg.n_max : default_n_max(spec, m_hard);
      t["n_max_rule"] = cfg.n_max != 0 ? "configured" : "per sample: >1e3 expected zero-error classifiers";
    }
    trunc[std::to_string(m)] = t;
  }
  j["truncation"] = trunc;
  json checks = json::array();
  for (const Check& c : result.checks)
    checks.push_back({{"name", c.name}, {"hard", c.hard}, {"passed", c.passed}, {"detail", c.detail}});
  j["checks"] = checks;
  j["warnings"] = result.warnings;
  j["timestamp"] = iso_timestamp();
  return j.dump(2) + "\n";
}

void write_outputs(const ExperimentConfig& cfg, const RunResult& result, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto put = [&](const std::string& name, const std::string& body) {
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (fs::path(dir) / name).string());
    out << body;
  };
  put("rows.csv", rows_csv(result.rows));
  put("summary.csv", summary_csv(result.summary));
  put("timing.csv", timing_csv(result.rows));
  put("meta.json", meta_json(cfg, result));
  if (!result.region.empty()) put("region.csv", region_csv(result.region));
}

}  // namespace misspec
