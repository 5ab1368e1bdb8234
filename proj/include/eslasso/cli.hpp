#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace eslasso {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitNumerical = 1, kExitUsage = 2 };

/// Entry point of the `eslasso` tool: subcommands simulate, fit, cv, coes and
/// tailbound. Messages go to `out` and `err`; data files go to --out.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace eslasso
