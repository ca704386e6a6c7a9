#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rwl {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // error while computing
inline constexpr int kExitUsage = 2;    // bad flags, unreadable dataset, level out of range
inline constexpr int kExitNotPsd = 3;   // Gram written but not positive semidefinite

// Runs one command; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rwl
