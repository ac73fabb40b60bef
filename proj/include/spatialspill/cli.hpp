#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spatialspill::cli {

/// Runs one subcommand. Exit codes: 0 success, 1 data/model error (the
/// message names the library error), 2 usage error. Declared outputs are
/// written atomically; every run leaves a manifest next to its first output.
int execute(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int execute(const std::vector<std::string>& args);

}  // namespace spatialspill::cli
