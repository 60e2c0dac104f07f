#pragma once

#include <string>
#include <vector>

// Command-line entry point, callable in-process so tests can drive the
// binary's behavior directly. args excludes the program name. Returns the
// process exit code: 0 success, 1 usage or contract violation, 2 bad data,
// 3 numeric failure.

namespace esdnet {

int run_cli(const std::vector<std::string>& args);

}  // namespace esdnet
