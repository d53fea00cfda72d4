#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pamm::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kNumericFailure = 1,
  kIoFailure = 2,
  kUsage = 64,
};

/// Runs the `pamm` command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pamm::cli
