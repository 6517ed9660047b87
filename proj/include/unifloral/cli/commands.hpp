#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace unifloral {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitNumeric = 3, kExitIo = 4 };

// Environment variable naming the parent of default run directories.
inline constexpr const char* kOutputRootVariable = "UNIFLORAL_OUTPUT_ROOT";

// Entry point of the unifloral tool. args excludes the program name.
// Subcommands: gen-data, train, train-dynamics, collect-scores, bandit-eval,
// report. Each writes its outputs and a manifest.json into one run directory
// (--out, or <output root>/<command>-<hash of the arguments>).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace unifloral
