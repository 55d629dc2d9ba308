#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "cloudnmpc/sim.hpp"

namespace cloudnmpc {

/// Exit codes shared by all subcommands.
enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitAborted = 2, kExitGradient = 3 };

/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "CLOUDNMPC_OUT_DIR";

/// Entry point of the `cloudnmpc` tool; args exclude the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

nlohmann::json summary_to_json(const RunSummary& s, const std::string& message = {});

/// Writes trajectory.csv, summary.json and resolved_scenario.json into `dir`.
void write_run_outputs(const std::filesystem::path& dir, const TrajectoryLog& log, const nlohmann::json& resolved);

struct GradientSuiteResult {
  std::string suite;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::string worst;  // human-readable location of the worst entry
  bool passed() const { return max_error <= tolerance; }
};

/// Finite-difference checks of smoothdist, barrier, dynamics and the OCP at the
/// scenario's parameters.
std::vector<GradientSuiteResult> run_gradient_suites(const ScenarioConfig& cfg);

}  // namespace cloudnmpc
