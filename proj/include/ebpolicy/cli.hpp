#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ebpolicy {

/// Exit codes of the command-line front end.
enum ExitCode : int { kExitOk = 0, kExitInput = 2, kExitNumeric = 3 };

/// Runs one subcommand (shrink, solve, evaluate, simulate, validate).
/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ebpolicy
