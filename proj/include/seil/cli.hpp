#pragma once

#include <string>
#include <vector>

namespace seil::cli {

// Exit codes: 0 success, 1 usage error, 2 runtime failure.
int run_command(int argc, const char* const* argv);

// Convenience for tests: argv without the program name.
int run_command(const std::vector<std::string>& args);

} // namespace seil::cli
