// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 success, 1 verification failure,
// 2 usage error (bad flags, bad configuration, violated contracts),
// 3 runtime error (I/O, corrupt files, numerical failure).

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace pdeblur::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerificationFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Environment variable naming the default output root (fallback "pdeblur_out").
inline constexpr const char* kOutputRootEnv = "PDEBLUR_OUT";

std::filesystem::path default_output_root();

/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace pdeblur::cli
