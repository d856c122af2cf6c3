#pragma once

// Declarative scenario files: parsing and validation, dispatch to the
// modules, CSV/JSON artifacts and the run manifest.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hbdm/geometry.hpp"
#include "hbdm/wavefunction.hpp"

namespace hbdm {

inline constexpr int kSchemaVersion = 1;

enum class RunType {
  Simulate,
  Equivariance,
  CheckCurrentCondition,
  CheckDivergence,
  SlaterDemo,
  FoliationExport,
};

/// Name used in the config's run.type field.
std::string_view to_string(RunType type) noexcept;
/// Name of the matching command-line subcommand.
std::string_view subcommand_name(RunType type) noexcept;

struct Scenario {
  std::string text;  // raw config, hashed into the manifest
  std::string name;
  int dimension = 1;
  int particles = 1;
  std::uint64_t seed = 0;
  std::string output_dir;
  RunType run = RunType::Simulate;
  nlohmann::json config;
};

/// Parses and fully validates a config. Throws ConfigError naming the
/// offending field (or the line and column for syntax errors).
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);

MultiTimeWaveFunction build_wavefunction(const Scenario& scenario);
/// Throws ConfigError for a slater-only wedge or a missing foliation block.
std::shared_ptr<const Foliation> build_foliation(const Scenario& scenario);

struct RunSettings {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  int threads = 1;
};

struct CheckResult {
  std::string name;
  bool gated = true;
  bool passed = false;
  double value = 0.0;
  std::string relation;  // how value compares with bound for a pass
  double bound = 0.0;
  std::string detail;
};

struct OutputFile {
  std::string name;  // relative to the output directory
  std::string contents;
};

struct ScenarioResult {
  std::string output_dir;
  std::uint64_t seed = 0;
  std::vector<CheckResult> checks;
  std::vector<OutputFile> outputs;  // manifest.json last
  bool passed = false;
};

/// Executes the run block. Outputs are returned in memory; nothing is
/// written. Module errors propagate as hbdm::Error.
ScenarioResult run_scenario(const Scenario& scenario, const RunSettings& settings);

/// Creates the output directory and writes every output file.
void write_outputs(const ScenarioResult& result);

/// Process exit status for a finished run: 0 iff every gated check passed.
int exit_status(const ScenarioResult& result) noexcept;

}  // namespace hbdm
