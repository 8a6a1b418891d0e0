#pragma once

#include <iosfwd>

namespace asymfusion {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;

/// Entry point of the `asymfusion` tool. Failures print a JSON error record
/// to `err` and return kExitUsage, kExitConfig or kExitRuntime.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace asymfusion
