#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace clademap::cli {

enum ExitCode { kSuccess = 0, kInputError = 1, kInternalError = 2 };

/// Runs the command line `args` (without the program name). Returns an ExitCode.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace clademap::cli
