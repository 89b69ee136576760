#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace datagrad {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitRuntimeError = 2;

/// Entry point of the `datagrad` tool. `args` excludes the program name.
/// Subcommands: train, attack, sweep, report.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace datagrad
