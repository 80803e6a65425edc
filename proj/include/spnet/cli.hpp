#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace spnet {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitRuntime = 1,
  kExitUsage = 2,
  kExitDiverged = 3,
};

/// Environment variable holding the default output root.
inline constexpr const char* kOutputRootEnv = "SPNET_OUTPUT_ROOT";

/// Runs the `spnet` command line (`gen`, `train`, `eval`, `infer`, `analyze`)
/// in-process. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spnet
