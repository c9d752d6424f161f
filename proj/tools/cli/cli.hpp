#pragma once

// The `lutnet` command line, callable in-process so tests can drive it.

#include <iosfwd>
#include <string>
#include <vector>

namespace lutnet::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kCapacity = 3 };

/// Machine-readable results go to `out`, diagnostics and usage to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace lutnet::cli
