#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pbrt::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kIo = 2,
    kValidation = 3,
    kNotConverged = 4,
};

/// Runs one invocation. args excludes the program name. Data goes to out,
/// diagnostics to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pbrt::cli
