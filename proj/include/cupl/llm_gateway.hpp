#pragma once

// Client for an OpenAI-completions-compatible endpoint plus an on-disk cache.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <semaphore>
#include <string>
#include <vector>

namespace cupl {

struct GenerationConfig {
  std::string model = "text-davinci-002";
  double temperature = 0.99;
  int max_tokens = 50;
  int completions_per_prompt = 10;
  std::string stop_sequence = ".";
  std::chrono::milliseconds request_timeout{60'000};
  int max_retries = 5;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

struct CompletionBatch {
  std::string prompt;
  std::vector<std::string> raw_texts;
  std::string model;
  bool cached = false;
};

/// Exponential backoff: base * multiplier^attempt, capped at max_delay.
struct RetryPolicy {
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{30'000};
  double multiplier = 2.0;

  std::chrono::milliseconds delay_for(int attempt) const;
};

class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  virtual CompletionBatch complete(const std::string& prompt, const GenerationConfig& config) = 0;
};

struct LlmEndpoint {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string api_key;
};

/// Splits "scheme://host[:port][/prefix]" into the origin and path prefix.
struct ParsedUrl {
  std::string origin;
  std::string path_prefix;
};
ParsedUrl parse_base_url(const std::string& url);

class HttpCompletionClient final : public CompletionClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpCompletionClient(LlmEndpoint endpoint, std::size_t parallelism = 4,
                                RetryPolicy retry = {}, Sleeper sleeper = {});

  CompletionBatch complete(const std::string& prompt, const GenerationConfig& config) override;

 private:
  CompletionBatch attempt(const std::string& prompt, const GenerationConfig& config);

  LlmEndpoint endpoint_;
  ParsedUrl url_;
  RetryPolicy retry_;
  Sleeper sleeper_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
};

/// Hex SHA-256 over the canonical JSON of everything that determines a batch.
std::string cache_key(const std::string& prompt, const GenerationConfig& config);

/// Cache lookup, falling back to `client` on a miss or a corrupt entry.
CompletionBatch cached_complete(CompletionClient& client, const std::string& prompt,
                                const GenerationConfig& config,
                                const std::filesystem::path& cache_dir);

}  // namespace cupl
