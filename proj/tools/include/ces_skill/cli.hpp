#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ces_skill::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

// 64-bit FNV-1a, printed as 16 hex digits in output fingerprints.
std::string fingerprint(const std::string& canonical);

}  // namespace ces_skill::cli
