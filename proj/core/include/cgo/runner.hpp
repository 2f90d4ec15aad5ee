#pragma once

#include "cgo/config.hpp"
#include "cgo/media.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cgo {

enum class Experiment { verify_operators, cgo_decay, pairing_sweep, recover, null_test, carleman };

const char* experiment_name(Experiment e);
Experiment parse_experiment(const std::string& name);  // throws ConfigError

struct Check {
  std::string name;
  double value = 0.0;
  std::string relation;  // "<=", ">=", "in", "=="
  double lo = 0.0, hi = 0.0;
  bool pass = false;
  bool timing = false;  // wall-clock dependent, skipped by replay comparison
};

struct RunReport {
  std::string experiment;
  std::string config_hash;
  std::uint64_t seed = 0;
  int threads = 1;
  double wall_time = 0.0;
  std::vector<Check> checks;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::string> artifacts;
  std::string failure;  // numerical failure message, empty otherwise

  bool pass() const;
  // 0 pass, 1 check failure, 3 numerical failure.
  int exit_code() const;
  const Check* find(const std::string& name) const;
  std::string to_text() const;
  static RunReport parse(const std::string& text);
};

struct RunOptions {
  std::string output_dir;             // overrides the config when non-empty
  std::optional<std::uint64_t> seed;  // overrides the config
  int threads = 1;
  bool write_artifacts = true;
};

// Runs the experiment named by "experiment" in the config. Writes
// report.txt, config.txt and artifacts into the output directory.
// Configuration faults throw ConfigError; numerical failures are recorded
// in the report.
RunReport run(Config cfg, const RunOptions& opt);

struct ReplayOutcome {
  RunReport stored;
  RunReport rerun;
  bool match = false;
  std::vector<std::string> mismatches;
};

// Re-executes the stored config of a run directory and compares verdicts
// and values (relative tolerance rtol). Refuses with ConfigError when the
// stored hash does not match the stored config.
ReplayOutcome replay(const std::string& report_dir, int threads, double rtol = 1e-9,
                     const std::string& output_dir = "");

// Building blocks shared with the tests.
GridSpec grid_from_config(const Config& cfg);
Background background_from_config(const Config& cfg);
MediumSpec medium_spec_from_config(const Config& cfg, const std::string& section,
                                   const GridSpec& g);

}  // namespace cgo
