#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mcre {

inline constexpr const char* kVersion = "0.1.0";

/// Runs one `mcre` command line (without the program name). Returns the
/// process exit code: 0 success, 1 runtime error, 2 usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mcre
