#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bllopt::cli {

// Parses arguments (argv[0] included) and runs the selected subcommand.
// Returns the process exit code: 0 success, 1 data error, 2 config error,
// 3 infeasible optimization.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bllopt::cli
