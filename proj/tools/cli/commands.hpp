#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "cli/run_config.hpp"

namespace eciin::cli {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

struct CommandInfo {
  std::string name;
  std::string summary;
};

const std::vector<CommandInfo>& commands();
bool is_command(const std::string& name);

/// Runs one subcommand with its artifacts under the resolved output
/// directory. Returns the process exit status; diagnostics go to `err`.
int dispatch(const std::string& command, const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace eciin::cli
