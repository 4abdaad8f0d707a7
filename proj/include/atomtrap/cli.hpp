#pragma once

#include <cstdint>
#include <iosfwd>

namespace atomtrap::cli {

inline constexpr std::uint64_t kDefaultSeed = 20030923;

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kDataError = 3, kNumericalError = 4 };

// Entry point of the `atomtrap` tool; returns the process exit code.
// Summaries go to out, diagnostics to err.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace atomtrap::cli
