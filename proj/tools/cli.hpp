#pragma once

#include <string>
#include <vector>

namespace pda::cli {

// Exit code contract: 0 success, 2 configuration error, 3 data/shape error,
// 4 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

// Runs one CLI invocation (args without the program name). All output goes to
// stdout/stderr; files are written relative to the current directory.
int run_cli(const std::vector<std::string>& args);

}  // namespace pda::cli
