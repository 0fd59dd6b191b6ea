#pragma once

#include <string>
#include <vector>

namespace iuq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumeric = 2;
inline constexpr int kExitUsage = 64;

std::string version();

/// Dispatch one command line (without argv[0]). Returns the process exit
/// code: 0 success, 1 validation error, 2 numerical error, 64 usage error.
/// Every command writes its declared outputs plus a JSON manifest with input
/// hashes and the effective seed. IUQ_OUTPUT_ROOT, when set, prefixes
/// relative output paths.
int run(std::vector<std::string> args);

}  // namespace iuq::cli
