#pragma once

// Commands behind the hypharm executable. Each writes plot-ready tables and
// text reports into an output directory; every file starts with the
// header from output_header(), so it can be regenerated from itself.

#include "hypharm/config.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace hypharm {

// Stable exit codes.
inline constexpr int kExitPass = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitUsage = 2;

struct CommandResult {
  int exit_code = kExitPass;
  std::vector<std::filesystem::path> outputs;
  std::string summary;
};

CommandResult cmd_extend(const ExperimentConfig& c, const std::filesystem::path& out);
CommandResult cmd_flow(const ExperimentConfig& c, const std::filesystem::path& out);
CommandResult cmd_verify(const ExperimentConfig& c, const std::filesystem::path& out);
CommandResult cmd_constants(const ExperimentConfig& c, const std::filesystem::path& out);
CommandResult cmd_hopf(const ExperimentConfig& c, const std::filesystem::path& out);

// Dispatch on c's [run] command.
CommandResult run_command(const ExperimentConfig& c, const std::filesystem::path& out);

// argv-level entry point: hypharm <command> --config PATH [--out DIR] [--seed N].
int run_cli(int argc, char** argv);

}  // namespace hypharm
