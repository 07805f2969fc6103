#pragma once

#include "pato/config.hpp"

#include <vector>

namespace pato {

// One exit code per failure class, so scripts can branch on what went wrong.
inline constexpr int exitOk = 0;
inline constexpr int exitUsage = 2;    // bad flags, unknown subcommand
inline constexpr int exitConfig = 3;   // schema violations and value bounds
inline constexpr int exitMissing = 4;  // missing files and other IO trouble
inline constexpr int exitSolver = 5;   // linear solves or whole pipelines failed

/// Full command-line entry point: parses argv, loads the config, runs one
/// subcommand, and maps every failure to the codes above. Never throws.
int run(int argc, const char* const* argv);

}  // namespace pato
