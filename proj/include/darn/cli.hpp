#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace darn::cli {

enum ExitCode { kOk = 0, kUsage = 1, kDataError = 2, kNumericAbort = 3 };

// Runs one subcommand; diagnostics go to `err`, progress and dumps to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace darn::cli
