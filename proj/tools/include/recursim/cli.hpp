#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace recursim::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

/// Runs one subcommand. `args` excludes the program name. Data goes to `out`,
/// diagnostics and usage to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// `start:stop:count`, linear or logarithmic spacing.
std::vector<double> parse_range(const std::string& spec, bool log_spaced);

}  // namespace recursim::cli
