#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sfcausal {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNotConverged = 3 };

// Runs the command line (args excludes the program name). Results go to files or `out`;
// diagnostics go to `err`. Relative output paths resolve against $SFCAUSAL_OUTPUT_DIR when set.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sfcausal
