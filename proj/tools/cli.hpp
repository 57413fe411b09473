// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace s2ag::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Environment variable naming a config file used when --config is absent.
inline constexpr const char* kConfigEnv = "S2AG_CONFIG";

/// Parses and executes one command line. Messages go to `out`/`err`; the
/// return value is the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace s2ag::cli
