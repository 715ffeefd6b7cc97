#pragma once

#include <string>
#include <vector>

namespace irisseg::cli {

/// Runs one command line (without the program name). Returns the exit
/// code: 0 success, 1 user error, 2 runtime failure.
int run(const std::vector<std::string>& args);

}  // namespace irisseg::cli
