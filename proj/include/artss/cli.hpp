#pragma once

#include <iosfwd>

namespace artss::cli {

inline constexpr const char* kArtifactVersion = "0.1.0";

// Exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

// Entry point behind the `artss` binary. Subcommands: reject, simulate,
// toytrain, report, replay. stdout gets one summary line per run, stderr
// gets diagnostics.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace artss::cli
