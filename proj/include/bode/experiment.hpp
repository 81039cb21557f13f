#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "bode/task.hpp"

namespace bode {

inline constexpr const char* kToolVersion = "1.0.0";

enum class Command { generate, baseline, bode, evaluate };
const char* to_string(Command c);
Command command_from_string(const std::string& s);

/// Resolved settings of one command. Serialized as a flat JSON object; the
/// same object is stored under "config" in every manifest.json.
struct RunConfig {
  std::string out;
  std::string dataset;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool force = false;

  // generate
  int nx = 16;
  int nz = 32;
  int timesteps = 600;
  double preview_noise = 0.0;

  // baseline / bode
  int members = 5;
  int epochs = 200;
  double noise = 0.0;
  double filter_width = 2.0;
  int cells_per_frame = 8;
  int eval_cells_per_frame = 16;

  // bode
  int sobol = 8;
  int iters = 30;
  int trial_epochs = 60;
  int gp_restarts = 8;
  int n_raw = 512;
  int n_refine = 4;
  int mc_samples = 256;

  // evaluate
  std::vector<std::string> runs;

  /// Throws InvalidArgument naming the offending field.
  void validate(Command c) const;
};

nlohmann::json to_json(const RunConfig& c);
/// Reads a flat config, or the "config" member of a manifest. Unknown keys
/// are rejected.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

/// Field task used by baseline / bode / evaluate for a config.
FieldTaskOptions task_options(const RunConfig& c);

/// Each command validates the config, writes its outputs under c.out and
/// returns the report it wrote (report.json, or meta.json for generate).
nlohmann::json cmd_generate(const RunConfig& c);
nlohmann::json cmd_baseline(const RunConfig& c);
nlohmann::json cmd_bode(const RunConfig& c);
nlohmann::json cmd_evaluate(const RunConfig& c);
nlohmann::json run_command(Command cmd, const RunConfig& c);

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitCompute = 3;

/// Entry point of the `bode` tool; argv[0] is the program name.
int run_cli(int argc, const char* const* argv);

}  // namespace bode
