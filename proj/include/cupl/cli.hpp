#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cupl::cli {

/// Runs the `cupl` command line. `args` excludes the program name. Returns the
/// process exit code: 0 success, 2 configuration or usage error, 3 upstream
/// (LLM or embedding) error, 4 I/O error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cupl::cli
