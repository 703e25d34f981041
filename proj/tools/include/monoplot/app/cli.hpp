#pragma once

#include <ostream>

namespace monoplot::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitDegenerate = 3;

/// Runs `monoplot` with the given arguments (argv[0] is the program name).
/// Results go to `out`; diagnostics and log lines go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace monoplot::app
