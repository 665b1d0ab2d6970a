#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rasgd {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,      // runtime failure or every run diverged
  kExitConfig = 2,       // usage or configuration error
  kExitNotHarmonic = 3,  // harmonic periods required
  kExitNoExact = 4,      // exact local gradients required
};

/// Runs the tool on `args` (without the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv);

}  // namespace rasgd
