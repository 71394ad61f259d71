#pragma once

#include <iosfwd>

namespace pathlens::cli {

/// Runs one subcommand. Returns 0 on success, 1 on usage errors, 2 on data
/// errors and 3 on numerical failures; diagnostics go to `err`.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pathlens::cli
