#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "misspec/experiments.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kInvariant = 2, kStatistical = 3 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Misspecified-model inconsistency experiments"};
  std::string experiment;
  std::string config_path;
  std::optional<std::uint64_t> seed, trials;
  std::vector<std::uint64_t> m_list;
  std::string mode, out_dir;
  std::vector<std::string> sets;
  bool strict = false, to_stdout = false;

  std::string names;
  for (const auto& n : misspec::experiment_names()) names += (names.empty() ? "" : ", ") + n;
  app.add_option("experiment", experiment, "one of: " + names);
  app.add_option("--config", config_path, "flat JSON config file");
  app.add_option("--seed", seed, "base seed");
  app.add_option("--m", m_list, "sample sizes")->expected(1, -1);
  app.add_option("--trials", trials, "trials per sample size");
  app.add_option("--mode", mode, "explicit | aggregated | auto");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--set", sets, "override any config key, key=value");
  app.add_flag("--strict", strict, "exit 3 when a statistical check fails");
  app.add_flag("--stdout", to_stdout, "also print rows.csv to standard output");
  app.footer("Config keys:\n" + misspec::config_help());

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  misspec::ExperimentConfig cfg;
  misspec::RunResult result;
  try {
    if (!config_path.empty()) cfg = misspec::load_config(config_path);
    if (!experiment.empty()) cfg.experiment = experiment;
    if (seed) cfg.seed = *seed;
    if (trials) cfg.trials = *trials;
    if (!m_list.empty()) cfg.m_list = m_list;
    if (!mode.empty()) misspec::apply_override(cfg, "mode", mode);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw misspec::ConfigError("--set expects key=value, got '" + s + "'");
      misspec::apply_override(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    misspec::validate(cfg);
    cfg.progress = true;
    std::cerr << "[" << cfg.experiment << "] config " << misspec::canonical_json(cfg) << "\n";
    result = misspec::run_experiment(cfg);
    misspec::write_outputs(cfg, result, cfg.out_dir);
  } catch (const misspec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvariant;
  }

  if (to_stdout) std::cout << misspec::rows_csv(result.rows);
  for (const auto& w : result.warnings) std::cerr << "WARNING: " << w << "\n";
  for (const auto& c : result.checks)
    std::cerr << (c.passed ? "PASS " : "FAIL ") << (c.hard ? "[invariant] " : "[statistical] ")
              << c.name << (c.detail.empty() ? "" : " (" + c.detail + ")") << "\n";
  std::cerr << "wrote " << cfg.out_dir << "\n";
  if (result.hard_failure()) return kInvariant;
  if (strict && result.statistical_failure()) return kStatistical;
  return kOk;
}
