#include "cupl/config.hpp"

#include <cstdint>
#include <cstdlib>

#include <toml.hpp>

#include "cupl/error.hpp"
#include "cupl/io.hpp"

namespace cupl {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ConfigError, where + ": " + what);
}

std::string where(const std::string& source, const toml::node& node) {
  const auto& region = node.source();
  return region.begin.line ? source + ":" + std::to_string(region.begin.line) : source;
}

std::string get_string(const std::string& source, const std::string& key, const toml::node& node) {
  if (auto v = node.value_exact<std::string>()) return *v;
  fail(where(source, node), "'" + key + "' must be a string");
}

bool get_bool(const std::string& source, const std::string& key, const toml::node& node) {
  if (auto v = node.value_exact<bool>()) return *v;
  fail(where(source, node), "'" + key + "' must be true or false");
}

std::int64_t get_int(const std::string& source, const std::string& key, const toml::node& node, std::int64_t min) {
  auto v = node.value_exact<std::int64_t>();
  if (!v) fail(where(source, node), "'" + key + "' must be an integer");
  if (*v < min) fail(where(source, node), "'" + key + "' must be at least " + std::to_string(min));
  return *v;
}

double get_number(const std::string& source, const std::string& key, const toml::node& node) {
  if (auto v = node.value_exact<double>()) return *v;
  if (auto v = node.value_exact<std::int64_t>()) return static_cast<double>(*v);
  fail(where(source, node), "'" + key + "' must be a number");
}

}  // namespace

std::string_view to_string(EmbedBackend backend) {
  switch (backend) {
    case EmbedBackend::Hash: return "hash";
    case EmbedBackend::File: return "file";
    case EmbedBackend::Http: return "http";
  }
  return "?";
}

EmbedBackend parse_embed_backend(std::string_view text) {
  if (text == "hash") return EmbedBackend::Hash;
  if (text == "file") return EmbedBackend::File;
  if (text == "http") return EmbedBackend::Http;
  throw Error(ErrorCode::ConfigError, "unknown embedding backend '" + std::string(text) + "' (hash, file, http)");
}

void RunConfig::validate() const {
  if (parallelism < 1) throw Error(ErrorCode::ConfigError, "parallelism must be at least 1");
  switch (embedding.backend) {
    case EmbedBackend::Hash:
      if (embedding.dim == 0) throw Error(ErrorCode::ConfigError, "embedding.dim must be positive");
      break;
    case EmbedBackend::File:
      if (embedding.file.empty()) throw Error(ErrorCode::ConfigError, "file backend needs embedding.file");
      break;
    case EmbedBackend::Http:
      if (embedding.url.empty()) throw Error(ErrorCode::ConfigError, "http backend needs embedding.url");
      break;
  }
  llm.generation.validate();
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& source) {
  toml::table doc;
  try {
    doc = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    fail(source + ":" + std::to_string(e.source().begin.line), std::string(e.description()));
  }

  auto& gen = config.llm.generation;
  auto& emb = config.embedding;
  for (const auto& [k, node] : doc) {
    const std::string key(k.str());
    if (key == "llm" || key == "embedding") {
      const auto* table = node.as_table();
      if (!table) fail(where(source, node), "'" + key + "' must be a table");
      for (const auto& [sk, v] : *table) {
        const std::string sub(sk.str());
        const std::string full = key + "." + sub;
        if (full == "llm.base_url") config.llm.base_url = get_string(source, full, v);
        else if (full == "llm.api_key") config.llm.api_key = get_string(source, full, v);
        else if (full == "llm.model") gen.model = get_string(source, full, v);
        else if (full == "llm.temperature") gen.temperature = get_number(source, full, v);
        else if (full == "llm.max_tokens") gen.max_tokens = static_cast<int>(get_int(source, full, v, 1));
        else if (full == "llm.completions_per_prompt") gen.completions_per_prompt = static_cast<int>(get_int(source, full, v, 1));
        else if (full == "llm.stop") gen.stop_sequence = get_string(source, full, v);
        else if (full == "llm.timeout_ms") gen.request_timeout = std::chrono::milliseconds(get_int(source, full, v, 1));
        else if (full == "llm.max_retries") gen.max_retries = static_cast<int>(get_int(source, full, v, 0));
        else if (full == "embedding.backend") emb.backend = parse_embed_backend(get_string(source, full, v));
        else if (full == "embedding.dim") emb.dim = static_cast<std::size_t>(get_int(source, full, v, 1));
        else if (full == "embedding.seed") emb.seed = static_cast<std::uint64_t>(get_int(source, full, v, 0));
        else if (full == "embedding.file") emb.file = get_string(source, full, v);
        else if (full == "embedding.url") emb.url = get_string(source, full, v);
        else if (full == "embedding.prenormalize") emb.prenormalize = get_bool(source, full, v);
        else fail(where(source, v), "unknown config key '" + full + "'");
      }
    } else if (key == "dataset") config.dataset_id = get_string(source, key, node);
    else if (key == "mode") config.mode = get_string(source, key, node);
    else if (key == "catalog_dir") config.catalog_dir = get_string(source, key, node);
    else if (key == "cache_dir") config.cache_dir = get_string(source, key, node);
    else if (key == "out_dir") config.out_dir = get_string(source, key, node);
    else if (key == "parallelism") config.parallelism = static_cast<std::size_t>(get_int(source, key, node, 1));
    else if (key == "log_level") config.log_level = get_string(source, key, node);
    else fail(where(source, node), "unknown config key '" + key + "'");
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  apply_config_text(config, read_file(path), path.string());
}

void apply_environment(RunConfig& config, const EnvLookup& env) {
  if (auto v = env("CUPL_API_KEY")) config.llm.api_key = *v;
  if (auto v = env("CUPL_LLM_URL")) config.llm.base_url = *v;
  if (auto v = env("CUPL_MODEL")) config.llm.generation.model = *v;
  if (auto v = env("CUPL_EMBED_URL")) config.embedding.url = *v;
  if (auto v = env("CUPL_CACHE_DIR")) config.cache_dir = *v;
  if (auto v = env("CUPL_CATALOG_DIR")) config.catalog_dir = *v;
  if (auto v = env("CUPL_LOG_LEVEL")) config.log_level = *v;
}

EnvLookup process_environment() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* value = std::getenv(name.c_str());
    if (!value || !*value) return std::nullopt;
    return std::string(value);
  };
}

}  // namespace cupl
