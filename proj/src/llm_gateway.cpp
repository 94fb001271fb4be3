#include "cupl/llm_gateway.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "cupl/error.hpp"
#include "cupl/io.hpp"

namespace cupl {

namespace {

using nlohmann::json;

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

json config_json(const GenerationConfig& config) {
  // std::map-backed json: keys serialize sorted, which makes the dump canonical.
  return json{{"model", config.model},
              {"temperature", config.temperature},
              {"max_tokens", config.max_tokens},
              {"completions_per_prompt", config.completions_per_prompt},
              {"stop_sequence", config.stop_sequence}};
}

GenerationConfig config_from_json(const json& j) {
  GenerationConfig config;
  config.model = j.at("model").get<std::string>();
  config.temperature = j.at("temperature").get<double>();
  config.max_tokens = j.at("max_tokens").get<int>();
  config.completions_per_prompt = j.at("completions_per_prompt").get<int>();
  config.stop_sequence = j.at("stop_sequence").get<std::string>();
  return config;
}

// Parses a stored entry; empty optional when the entry fails validation.
std::optional<CompletionBatch> read_cache_entry(const std::filesystem::path& path,
                                                const std::string& key,
                                                const GenerationConfig& config,
                                                std::string& problem) {
  try {
    const json entry = json::parse(read_file(path));
    if (entry.at("key").get<std::string>() != key) {
      problem = "key field does not match file name";
      return std::nullopt;
    }
    const auto prompt = entry.at("prompt").get<std::string>();
    const auto stored = config_from_json(entry.at("config"));
    if (cache_key(prompt, stored) != key) {
      problem = "content hash mismatch";
      return std::nullopt;
    }
    CompletionBatch batch;
    batch.prompt = prompt;
    batch.model = stored.model;
    batch.raw_texts = entry.at("texts").get<std::vector<std::string>>();
    batch.cached = true;
    if (batch.raw_texts.size() != static_cast<std::size_t>(config.completions_per_prompt)) {
      problem = "stored " + std::to_string(batch.raw_texts.size()) + " texts, expected " +
                std::to_string(config.completions_per_prompt);
      return std::nullopt;
    }
    return batch;
  } catch (const json::exception& e) {
    problem = e.what();
  } catch (const Error& e) {
    problem = e.what();
  }
  return std::nullopt;
}

}  // namespace

void GenerationConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
  if (model.empty()) fail("model must not be empty");
  if (!std::isfinite(temperature) || temperature < 0.0 || temperature > 2.0) {
    fail("temperature must lie in [0, 2], got " + std::to_string(temperature));
  }
  if (max_tokens < 1) fail("max_tokens must be at least 1");
  if (completions_per_prompt < 1) fail("completions_per_prompt must be at least 1");
  if (max_retries < 0) fail("max_retries must not be negative");
  if (request_timeout.count() <= 0) fail("request_timeout must be positive");
}

std::chrono::milliseconds RetryPolicy::delay_for(int attempt) const {
  const double raw = static_cast<double>(base_delay.count()) * std::pow(multiplier, std::max(attempt, 0));
  const double capped = std::min(raw, static_cast<double>(max_delay.count()));
  return std::chrono::milliseconds(static_cast<std::chrono::milliseconds::rep>(capped));
}

ParsedUrl parse_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::ConfigError, "URL '" + url + "' needs a scheme (http:// or https://)");
  }
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw Error(ErrorCode::ConfigError, "unsupported URL scheme '" + scheme + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl parsed;
  parsed.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) parsed.path_prefix = url.substr(path_start);
  while (!parsed.path_prefix.empty() && parsed.path_prefix.back() == '/') parsed.path_prefix.pop_back();
  if (parsed.origin.size() <= scheme_end + 3) throw Error(ErrorCode::ConfigError, "URL '" + url + "' has no host");
  return parsed;
}

HttpCompletionClient::HttpCompletionClient(LlmEndpoint endpoint, std::size_t parallelism,
                                           RetryPolicy retry, Sleeper sleeper)
    : endpoint_(std::move(endpoint)),
      url_(parse_base_url(endpoint_.base_url)),
      retry_(retry),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](auto d) { std::this_thread::sleep_for(d); })),
      slots_(std::make_unique<std::counting_semaphore<>>(
          static_cast<std::ptrdiff_t>(std::max<std::size_t>(parallelism, 1)))) {}

CompletionBatch HttpCompletionClient::complete(const std::string& prompt, const GenerationConfig& config) {
  config.validate();
  for (int attempt_no = 0;; ++attempt_no) {
    try {
      slots_->acquire();
      struct Release {
        std::counting_semaphore<>* s;
        ~Release() { s->release(); }
      } release{slots_.get()};
      return attempt(prompt, config);
    } catch (const Error& e) {
      const bool retryable = e.code() == ErrorCode::RateLimited || e.code() == ErrorCode::TransportError;
      if (!retryable || attempt_no >= config.max_retries) throw;
      const auto delay = retry_.delay_for(attempt_no);
      spdlog::warn("completion request failed ({}); retry {}/{} in {} ms", e.what(), attempt_no + 1,
                   config.max_retries, delay.count());
      sleeper_(delay);
    }
  }
}

CompletionBatch HttpCompletionClient::attempt(const std::string& prompt, const GenerationConfig& config) {
  httplib::Client client(url_.origin);
  client.set_connection_timeout(config.request_timeout);
  client.set_read_timeout(config.request_timeout);
  client.set_write_timeout(config.request_timeout);

  const json body{{"model", config.model},
                  {"prompt", prompt},
                  {"max_tokens", config.max_tokens},
                  {"temperature", config.temperature},
                  {"n", config.completions_per_prompt},
                  {"stop", config.stop_sequence}};
  httplib::Headers headers;
  if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);

  auto result = client.Post(url_.path_prefix + "/completions", headers, body.dump(), "application/json");
  if (!result) {
    throw Error(ErrorCode::TransportError,
                url_.origin + ": " + httplib::to_string(result.error()));
  }
  const int status = result->status;
  if (status == 401 || status == 403) {
    throw Error(ErrorCode::AuthError, "endpoint rejected credentials (HTTP " + std::to_string(status) + ")");
  }
  if (status == 429) throw Error(ErrorCode::RateLimited, "HTTP 429 from " + url_.origin);
  if (status >= 500) throw Error(ErrorCode::TransportError, "HTTP " + std::to_string(status) + " from " + url_.origin);
  if (status != 200) {
    throw Error(ErrorCode::MalformedResponse,
                "HTTP " + std::to_string(status) + " from " + url_.origin + ": " + result->body);
  }

  CompletionBatch batch;
  batch.prompt = prompt;
  batch.model = config.model;
  try {
    const json response = json::parse(result->body);
    for (const auto& choice : response.at("choices")) {
      batch.raw_texts.push_back(choice.at("text").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedResponse, std::string("unparsable completions response: ") + e.what());
  }
  if (batch.raw_texts.size() != static_cast<std::size_t>(config.completions_per_prompt)) {
    throw Error(ErrorCode::MalformedResponse,
                "expected " + std::to_string(config.completions_per_prompt) + " completions, got " +
                    std::to_string(batch.raw_texts.size()));
  }
  return batch;
}

std::string cache_key(const std::string& prompt, const GenerationConfig& config) {
  json keyed = config_json(config);
  keyed["prompt"] = prompt;
  return sha256_hex(keyed.dump());
}

CompletionBatch cached_complete(CompletionClient& client, const std::string& prompt,
                                const GenerationConfig& config, const std::filesystem::path& cache_dir) {
  const auto key = cache_key(prompt, config);
  const auto path = cache_dir / (key + ".json");
  if (std::filesystem::exists(path)) {
    std::string problem;
    if (auto hit = read_cache_entry(path, key, config, problem)) return *std::move(hit);
    spdlog::warn("{}: ignoring corrupt cache entry {} ({}); refetching", to_string(ErrorCode::CacheCorrupt),
                 path.string(), problem);
  }

  CompletionBatch batch = client.complete(prompt, config);
  json entry{{"key", key}, {"prompt", prompt}, {"config", config_json(config)}, {"texts", batch.raw_texts}};
  write_file_atomic(path, entry.dump(2, ' ', false, json::error_handler_t::replace) + "\n");
  batch.cached = false;
  return batch;
}

}  // namespace cupl
