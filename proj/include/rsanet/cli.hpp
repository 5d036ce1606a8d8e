#pragma once

#include <string>
#include <vector>

namespace rsanet::cli {

inline constexpr const char* kVersion = "0.1.0";

// Runs one CLI invocation (subcommands: train, lr-find, predict, evaluate,
// baseline). Returns the process exit code: 0 success, 1 config/usage error,
// 2 data error, 3 numeric divergence. Errors also emit one machine-parseable
// line on stderr: rsanet-error: code=<n> kind=<k> message="...".
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace rsanet::cli
