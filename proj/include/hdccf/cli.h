#pragma once

#include <iosfwd>

namespace hdccf {

/// Exit statuses of the command-line tool.
enum ExitCode { exit_ok = 0, exit_usage = 1, exit_data = 2, exit_numeric = 3 };

/// Parses argv (argv[0] is the program name) and runs one subcommand.
/// Results go to `out`; a one-line diagnostic goes to `err` on failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hdccf
