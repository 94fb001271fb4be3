#include "cupl/fixture_server.hpp"

#include <algorithm>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cupl/embedding.hpp"
#include "cupl/error.hpp"
#include "cupl/io.hpp"
#include "cupl/text.hpp"

namespace cupl::fixture {

namespace {

using nlohmann::json;

struct InFlight {
  std::atomic<std::size_t>& count;
  explicit InFlight(std::atomic<std::size_t>& c, std::atomic<std::size_t>& peak) : count(c) {
    const auto now = ++count;
    auto seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
  }
  ~InFlight() { --count; }
};

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
}

}  // namespace

FixtureCorpus FixtureCorpus::parse(const std::string& text) {
  FixtureCorpus corpus;
  try {
    const auto j = json::parse(text);
    for (const auto& e : j.at("completions")) {
      CorpusEntry entry;
      entry.prompt = e.at("prompt").get<std::string>();
      if (e.contains("temperature") && !e.at("temperature").is_null()) {
        entry.temperature = e.at("temperature").get<double>();
      }
      entry.texts = e.at("texts").get<std::vector<std::string>>();
      corpus.add(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad fixture corpus: ") + e.what());
  }
  return corpus;
}

FixtureCorpus FixtureCorpus::load(const std::filesystem::path& path) {
  try {
    return parse(read_file(path));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ParseError) throw;
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

const CorpusEntry* FixtureCorpus::find(const std::string& prompt, double temperature) const {
  const CorpusEntry* fallback = nullptr;
  for (const auto& e : entries_) {
    if (e.prompt != prompt) continue;
    if (e.temperature && *e.temperature == temperature) return &e;
    if (!e.temperature && !fallback) fallback = &e;
  }
  return fallback;
}

std::vector<std::string> synthetic_completions(const std::string& prompt, double temperature, std::size_t n) {
  const auto h = fnv1a64(prompt);
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(" It shows trait " + std::to_string((h >> 7) % 997) + " with variation " +
                  std::to_string((h + i * 7919) % 1000) + " at temperature " + format_shortest(temperature) +
                  " for: " + prompt);
  }
  return out;
}

CompletionBatch CorpusClient::complete(const std::string& prompt, const GenerationConfig& config) {
  ++calls_;
  const auto n = static_cast<std::size_t>(config.completions_per_prompt);
  CompletionBatch batch;
  batch.prompt = prompt;
  batch.model = config.model;
  if (const auto* entry = corpus_->find(prompt, config.temperature)) {
    const auto take = std::min(n, entry->texts.size());
    batch.raw_texts.assign(entry->texts.begin(), entry->texts.begin() + static_cast<std::ptrdiff_t>(take));
  } else if (synthesize_) {
    batch.raw_texts = synthetic_completions(prompt, config.temperature, n);
  } else {
    throw Error(ErrorCode::MalformedResponse, "no fixture completions for prompt '" + prompt + "'");
  }
  if (batch.raw_texts.size() != n) {
    throw Error(ErrorCode::MalformedResponse, "expected " + std::to_string(n) + " completions, got " +
                                                  std::to_string(batch.raw_texts.size()));
  }
  return batch;
}

FixtureServer::FixtureServer(FixtureCorpus corpus, Options options)
    : corpus_(std::move(corpus)), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  const HashEmbedder embedder(options_.embed_dim, options_.embed_seed);

  server_->Post(R"(.*/completions)", [this](const httplib::Request& req, httplib::Response& res) {
    InFlight guard(in_flight_, max_in_flight_);
    ++completion_hits_;
    std::optional<int> scripted;
    {
      std::lock_guard lock(mutex_);
      bodies_.push_back(req.body);
      if (!scripted_.empty()) {
        scripted = scripted_.front();
        scripted_.pop_front();
      }
    }
    if (options_.latency.count() > 0) std::this_thread::sleep_for(options_.latency);
    if (scripted) {
      reply_json(res, *scripted, {{"error", {{"message", "scripted failure"}}}});
      return;
    }
    if (!options_.api_key.empty() && req.get_header_value("Authorization") != "Bearer " + options_.api_key) {
      reply_json(res, 401, {{"error", {{"message", "invalid api key"}}}});
      return;
    }
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      reply_json(res, 400, {{"error", {{"message", e.what()}}}});
      return;
    }
    const auto prompt = body.value("prompt", std::string{});
    const auto n = body.value("n", std::size_t{1});
    const auto temperature = body.value("temperature", 1.0);

    std::vector<std::string> texts;
    if (const auto* entry = corpus_.find(prompt, temperature)) {
      texts.assign(entry->texts.begin(), entry->texts.begin() + static_cast<std::ptrdiff_t>(std::min(n, entry->texts.size())));
    } else if (options_.synthesize_unknown) {
      texts = synthetic_completions(prompt, temperature, n);
    } else {
      spdlog::debug("fixture server: unknown prompt '{}'", prompt);
      reply_json(res, 404, {{"error", {{"message", "no fixture for prompt: " + prompt}}}});
      return;
    }
    json choices = json::array();
    for (std::size_t i = 0; i < texts.size(); ++i) {
      choices.push_back({{"text", texts[i]}, {"index", i}, {"finish_reason", "stop"}});
    }
    reply_json(res, 200, {{"object", "text_completion"}, {"model", body.value("model", "")}, {"choices", choices}});
  });

  server_->Post(R"(.*/embed_text)", [this, embedder](const httplib::Request& req, httplib::Response& res) {
    InFlight guard(in_flight_, max_in_flight_);
    ++embed_hits_;
    if (options_.latency.count() > 0) std::this_thread::sleep_for(options_.latency);
    std::vector<std::string> texts;
    try {
      texts = json::parse(req.body).at("texts").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      reply_json(res, 400, {{"error", e.what()}});
      return;
    }
    json vectors = json::array();
    for (const auto& t : texts) vectors.push_back(embedder.embed_one(t).components);
    reply_json(res, 200, {{"dim", embedder.dim()}, {"vectors", vectors}});
  });

  if (options_.port == 0) {
    port_ = server_->bind_to_any_port(options_.host);
  } else if (server_->bind_to_port(options_.host, options_.port)) {
    port_ = options_.port;
  } else {
    port_ = -1;
  }
  if (port_ <= 0) {
    throw Error(ErrorCode::IoError, "fixture server cannot bind " + options_.host + ":" + std::to_string(options_.port));
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

FixtureServer::~FixtureServer() { stop(); }

std::string FixtureServer::base_url() const {
  return "http://" + options_.host + ":" + std::to_string(port_);
}

void FixtureServer::push_status(int status) {
  std::lock_guard lock(mutex_);
  scripted_.push_back(status);
}

std::vector<std::string> FixtureServer::completion_bodies() const {
  std::lock_guard lock(mutex_);
  return bodies_;
}

void FixtureServer::reset_counters() {
  std::lock_guard lock(mutex_);
  bodies_.clear();
  scripted_.clear();
  completion_hits_ = 0;
  embed_hits_ = 0;
  max_in_flight_ = 0;
}

void FixtureServer::wait() {
  if (thread_.joinable()) thread_.join();
}

void FixtureServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace cupl::fixture
