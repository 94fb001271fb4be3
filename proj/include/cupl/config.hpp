#pragma once

// Run configuration: defaults, a TOML file, environment, then flags.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "cupl/llm_gateway.hpp"

namespace cupl {

enum class EmbedBackend { Hash, File, Http };

std::string_view to_string(EmbedBackend backend);
EmbedBackend parse_embed_backend(std::string_view text);

struct RunConfig {
  std::string dataset_id;
  std::string mode;
  std::filesystem::path catalog_dir = "catalog";
  std::optional<std::filesystem::path> cache_dir;
  std::filesystem::path out_dir = ".";
  std::size_t parallelism = 4;
  std::string log_level = "warn";

  struct Llm {
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key;
    GenerationConfig generation;
  } llm;

  struct Embedding {
    EmbedBackend backend = EmbedBackend::Hash;
    std::size_t dim = 64;
    std::uint64_t seed = 0;
    std::filesystem::path file;  // text-embedding store for the file backend
    std::string url;             // embedding service for the http backend
    bool prenormalize = true;
  } embedding;

  /// ConfigError when parallelism is 0, the backend lacks its source, or the
  /// generation parameters are out of range.
  void validate() const;
};

/// Applies a TOML document: top-level `dataset`, `mode`, `catalog_dir`,
/// `cache_dir`, `out_dir`, `parallelism`, `log_level`, plus `[llm]` and
/// `[embedding]` tables. Syntax errors, unknown keys and wrongly typed values
/// throw ConfigError with source:line.
void apply_config_text(RunConfig& config, const std::string& text, const std::string& source = "<config>");
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads CUPL_API_KEY, CUPL_LLM_URL, CUPL_MODEL, CUPL_EMBED_URL,
/// CUPL_CACHE_DIR, CUPL_CATALOG_DIR and CUPL_LOG_LEVEL.
void apply_environment(RunConfig& config, const EnvLookup& env);
EnvLookup process_environment();

}  // namespace cupl
