#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hbdm/error.hpp"
#include "hbdm/scenario.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

void print_checks(const hbdm::ScenarioResult& r) {
  for (const auto& c : r.checks) {
    const char* tag = !c.gated ? "INFO" : (c.passed ? "PASS" : "FAIL");
    std::printf("%s  %s = %.6g", tag, c.name.c_str(), c.value);
    if (!c.relation.empty()) std::printf(c.gated ? " (%s %.6g)" : " (ungated; %s %.6g)", c.relation.c_str(), c.bound);
    std::printf("\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hypersurface Bohm-Dirac trajectories on foliations with kinks"};
  app.require_subcommand(1);
  Flags flags;
  const hbdm::RunType runs[] = {hbdm::RunType::Simulate,        hbdm::RunType::Equivariance,
                                hbdm::RunType::CheckCurrentCondition, hbdm::RunType::CheckDivergence,
                                hbdm::RunType::SlaterDemo,      hbdm::RunType::FoliationExport};
  for (hbdm::RunType r : runs) {
    auto* sub = app.add_subcommand(std::string(hbdm::subcommand_name(r)),
                                   "Run a scenario whose run.type is " + std::string(hbdm::to_string(r)));
    sub->add_option("--config", flags.config, "Scenario file (JSON)")->required();
    sub->add_option("--out", flags.out, "Output directory (overrides the scenario)");
    sub->add_option("--seed", flags.seed, "Random seed (overrides the scenario)");
    sub->add_option("--threads", flags.threads, "Worker threads for ensemble runs")->check(CLI::PositiveNumber);
  }
  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const hbdm::Scenario sc = hbdm::load_scenario(flags.config);
    if (hbdm::subcommand_name(sc.run) != command) {
      throw hbdm::Error(hbdm::ErrorCode::ConfigError,
                        "field 'run.type': '" + std::string(hbdm::to_string(sc.run)) + "' does not match subcommand '" +
                            command + "'");
    }
    hbdm::RunSettings settings;
    settings.seed = flags.seed;
    settings.output_dir = flags.out;
    settings.threads = flags.threads;
    const auto result = hbdm::run_scenario(sc, settings);
    hbdm::write_outputs(result);
    print_checks(result);
    std::printf("%s: %s (outputs in %s)\n", sc.name.c_str(), result.passed ? "passed" : "FAILED",
                result.output_dir.c_str());
    return hbdm::exit_status(result);
  } catch (const hbdm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 10 + static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
