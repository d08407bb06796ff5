// cli.hpp - the `dephase` command-line workbench

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dephase {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitMcFail = 1;      // mc-validate verdict FAIL
inline constexpr int kExitValidation = 2;
inline constexpr int kExitPartialScan = 3;
inline constexpr int kExitFitFailure = 4;

// Runs one invocation. args excludes the program name. Human-readable
// progress goes to `out`, errors to `err`; result files go to --out.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace dephase
