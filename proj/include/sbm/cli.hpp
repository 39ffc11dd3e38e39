#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sbm::cli {

/// Exit codes: 0 success / property holds, 1 property violated or check
/// failed, 2 usage, configuration or parse error, 3 node bound reached.
enum ExitCode { ok = 0, violated = 1, usage = 2, bound = 3 };

/// Runs one command line (without the program name).
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in);

}  // namespace sbm::cli
