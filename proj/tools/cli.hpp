#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rhomp::cli {

/// Exit codes: 0 success, 1 data or argument error, 2 I/O error,
/// 3 numerical failure (trainer stall).
enum ExitCode : int { kOk = 0, kDataError = 1, kIoError = 2, kNumericalError = 3 };

/// Runs one command line (args[0] is the program name). Reports go to
/// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rhomp::cli
