#pragma once

#include <string>
#include <vector>

namespace rfenet {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitInvalid = 2,
  kExitCheckpoint = 3,
  kExitNumerical = 4,
};

/// Runs the command line (`args[0]` is the program name) and returns the
/// process exit code. Diagnostics go to stderr, summaries to stdout.
int run_cli(const std::vector<std::string>& args);

}  // namespace rfenet
