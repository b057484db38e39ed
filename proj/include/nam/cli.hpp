#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace nam {

/// Exit codes of the nam tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;    // bad arguments, missing or malformed files
inline constexpr int kExitNumeric = 2;  // NaN/Inf during optimization

/// Runs one `nam` command. args excludes the program name. Normal output
/// goes to out, diagnostics to err; returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses a flat key=value config file into "--key=value" tokens. Blank
/// lines and lines starting with '#' are ignored.
std::vector<std::string> config_file_tokens(const std::string& path);

}  // namespace nam
