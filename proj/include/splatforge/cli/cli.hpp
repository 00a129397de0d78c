#pragma once

#include <iosfwd>

namespace splatforge {

/// Runs the command line and returns the process exit code:
/// 0 success, 1 validation error, 2 I/O error, 3 numerical failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace splatforge
