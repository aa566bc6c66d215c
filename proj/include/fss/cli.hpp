#pragma once

#include <string>
#include <vector>

namespace fss::cli {

/// Entry point shared by the fss binary and the CLI tests.  Returns the
/// process exit code; errors are reported as a single machine-parsable
/// line on stderr ("error: <kind>: <message>").
int run(const std::vector<std::string>& args);

constexpr const char* kToolVersion = "1.0.0";

}  // namespace fss::cli
