#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dlattice::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumerical = 2;

/// Runs one subcommand. argv[0] is the program name. Diagnostics go to err,
/// short progress lines to out.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lower-case hex SHA-256 of a file's contents.
std::string sha256_file(const std::string& path);

}  // namespace dlattice::cli
