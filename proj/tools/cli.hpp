#pragma once

// Command-line workflows: simulate, apply, corpus, pretrain, train, infer
// and eval. run() parses argv-style arguments and never throws; errors are
// reported on `err` and turned into a nonzero exit code.

#include <iosfwd>
#include <string>
#include <vector>

namespace plc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
/// Bad flags, unreadable config or inputs, missing checkpoints.
inline constexpr int kExitUsage = 2;

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace plc::cli
