#pragma once

#include <iosfwd>

namespace nlcausal {

/// Command-line entry point: subcommands simulate, fit, test, ci, transform, bench.
/// Returns 0 on success, 1 on usage errors and 2 on estimation failures, in
/// which case a JSON error object is written to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nlcausal
