#pragma once

#include <ostream>

namespace balpol {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

/// Entry point of the `balpol` tool: simulate | fit | evaluate | learn | bench | report.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace balpol
