#pragma once

#include <string>
#include <vector>

namespace umri::cli {

/// Exit codes of run().
inline constexpr int kOk = 0;
inline constexpr int kDomainError = 1;
inline constexpr int kUsageError = 2;
inline constexpr int kNumericalFailure = 3;

/// Runs one subcommand: ingest, test, robustness, sparse, cost, synth,
/// predict or report. `args` excludes the program name. Outputs are written
/// atomically; diagnostics go to standard error through the "umri" logger,
/// whose level comes from the UMRI_LOG_LEVEL environment variable (default
/// warn) and is raised by -v.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace umri::cli
