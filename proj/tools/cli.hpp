#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nsb::cli {

enum ExitCode : int {
    ok = 0,
    usage = 1,
    bad_input = 2,
    geometry = 3,
    empty_dataset = 4,
    diverged = 5,
    missing_model = 6,
};

/// Runs one command line (args excludes the program name) and returns the
/// process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nsb::cli
