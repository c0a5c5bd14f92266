#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sprop::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Runs one `sprop` invocation. args excludes the program name.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace sprop::cli
