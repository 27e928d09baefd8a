#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace webstar::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitBackend = 3;
inline constexpr int kExitPartial = 4;

inline constexpr const char* kToolVersion = "0.1.0";

// Runs one subcommand. `args` excludes the program name. Option values come
// from flags, then WEBSTAR_<OPTION> environment variables, then the
// --config file (key = value lines, optional [subcommand] sections).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace webstar::cli
