#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace svit::cli {

/// Runs one command line (without the program name). Returns the process
/// exit status: 0 success, 1 runtime failure, 2 bad arguments.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Worker count from SVIT_THREADS; 1 when unset. Throws ArgumentError on a
/// malformed value.
std::size_t threads_from_env();

}  // namespace svit::cli
