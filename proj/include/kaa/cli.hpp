#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kaa::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kIo = 3,
  kTheorem = 4,
};

/// Runs one subcommand (gen, train, mrd, bounds, gradcheck, probe). `args`
/// excludes the program name. Diagnostics go to `err` as a single line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kaa::cli
