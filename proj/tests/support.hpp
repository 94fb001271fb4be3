#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace cupl::testing {

std::filesystem::path source_dir();
std::filesystem::path fixture_dir();
std::filesystem::path shipped_catalog();
std::filesystem::path fixture_catalog();
std::filesystem::path cli_path();
std::filesystem::path fixture_tool_path();

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "cupl");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

struct ProcessResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

/// Runs `program args...` with extra `KEY=VALUE` environment entries and
/// captures stdout and stderr.
ProcessResult run_process(const std::filesystem::path& program, const std::vector<std::string>& args,
                          const std::vector<std::string>& env = {});

std::string slurp(const std::filesystem::path& path);

/// Non-empty lines of `text`.
std::vector<std::string> split_lines(const std::string& text);

}  // namespace cupl::testing
