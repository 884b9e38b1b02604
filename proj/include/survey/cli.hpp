#pragma once

#include <iosfwd>

namespace survey::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;  // bad flags, unreadable input, invalid design

/// Entry point of the `survey` tool. Output files are written only after all
/// computation succeeded, through a temporary file renamed into place.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace survey::cli
