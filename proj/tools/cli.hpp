#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lnprobe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Runs one command line. args[0] is the program name. The report goes to
// `out` unless --output names a file; diagnostics go to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lnprobe::cli
