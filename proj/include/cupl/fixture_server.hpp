#pragma once

// Replays recorded completions and serves hash embeddings over HTTP, for
// tests and offline runs.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cupl/llm_gateway.hpp"

namespace httplib {
class Server;
}

namespace cupl::fixture {

struct CorpusEntry {
  std::string prompt;
  std::optional<double> temperature;  // matches any temperature when absent
  std::vector<std::string> texts;
};

/// {"completions": [{"prompt", "temperature"?, "texts"}]}
class FixtureCorpus {
 public:
  static FixtureCorpus load(const std::filesystem::path& path);
  static FixtureCorpus parse(const std::string& text);

  void add(CorpusEntry entry) { entries_.push_back(std::move(entry)); }
  /// An entry pinned to `temperature` wins over an unpinned one.
  const CorpusEntry* find(const std::string& prompt, double temperature) const;
  std::size_t size() const { return entries_.size(); }
  const std::vector<CorpusEntry>& entries() const { return entries_; }

 private:
  std::vector<CorpusEntry> entries_;
};

/// Deterministic stand-in completions for prompts absent from a corpus.
std::vector<std::string> synthetic_completions(const std::string& prompt, double temperature, std::size_t n);

/// Answers straight from a corpus, without HTTP.
class CorpusClient final : public CompletionClient {
 public:
  explicit CorpusClient(std::shared_ptr<const FixtureCorpus> corpus, bool synthesize_unknown = false)
      : corpus_(std::move(corpus)), synthesize_(synthesize_unknown) {}
  CompletionBatch complete(const std::string& prompt, const GenerationConfig& config) override;
  std::size_t calls() const { return calls_; }

 private:
  std::shared_ptr<const FixtureCorpus> corpus_;
  bool synthesize_;
  std::atomic<std::size_t> calls_{0};
};

class FixtureServer {
 public:
  struct Options {
    std::string api_key;  // requests must carry it when non-empty
    std::chrono::milliseconds latency{0};
    std::size_t embed_dim = 64;
    std::uint64_t embed_seed = 0;
    bool synthesize_unknown = false;  // 404 for unknown prompts otherwise
    std::string host = "127.0.0.1";
    int port = 0;  // 0 picks a free port
  };

  FixtureServer(FixtureCorpus corpus, Options options);
  ~FixtureServer();
  FixtureServer(const FixtureServer&) = delete;
  FixtureServer& operator=(const FixtureServer&) = delete;

  std::string base_url() const;
  int port() const { return port_; }

  /// The next completion request answers with `status` instead of the corpus.
  void push_status(int status);

  std::size_t completion_hits() const { return completion_hits_; }
  std::size_t embed_hits() const { return embed_hits_; }
  std::size_t max_in_flight() const { return max_in_flight_; }
  /// Request bodies received on /completions, in arrival order.
  std::vector<std::string> completion_bodies() const;
  void reset_counters();

  /// Blocks until the server stops.
  void wait();
  void stop();

 private:
  FixtureCorpus corpus_;
  Options options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;

  mutable std::mutex mutex_;
  std::deque<int> scripted_;
  std::vector<std::string> bodies_;
  std::atomic<std::size_t> completion_hits_{0};
  std::atomic<std::size_t> embed_hits_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> max_in_flight_{0};
};

}  // namespace cupl::fixture
