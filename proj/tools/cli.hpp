// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lumeneq::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 1,
    kExitRuntime = 2,
    kExitThreshold = 3,
};

/// Runs one command line. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lumeneq::cli
