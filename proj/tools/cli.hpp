#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nwq::cli {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;    // bad flags, bad config, missing inputs
constexpr int kExitRuntime = 3;  // training divergence and other runtime failures

/// Runs the nwq command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nwq::cli
