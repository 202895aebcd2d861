#pragma once

#include <string>
#include <vector>

namespace multirfm {

/// Dispatches the simulate / fit / select-factors / evaluate / predict /
/// benchmark subcommands. Exit codes: 0 success, 1 runtime or model error,
/// 2 usage error.
int run_cli(int argc, const char* const* argv);

/// Same, for in-process callers ("multirfm" is prepended as argv[0]).
int run_cli(const std::vector<std::string>& args);

}  // namespace multirfm
