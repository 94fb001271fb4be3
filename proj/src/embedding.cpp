#include "cupl/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <random>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cupl/error.hpp"
#include "cupl/io.hpp"
#include "cupl/llm_gateway.hpp"

namespace cupl {

namespace {

using nlohmann::json;

constexpr double kZeroNorm = 1e-12;

bool all_finite(const std::vector<float>& values) {
  return std::all_of(values.begin(), values.end(), [](float x) { return std::isfinite(x); });
}

}  // namespace

double l2_norm(std::span<const float> v) {
  double sum = 0.0;
  for (float x : v) sum += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(sum);
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimMismatch, "dot product of dims " + std::to_string(a.size()) + " and " +
                                            std::to_string(b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return sum;
}

EmbeddingVector normalize(const EmbeddingVector& v) {
  const double norm = l2_norm(v.components);
  if (!(norm >= kZeroNorm)) throw Error(ErrorCode::ZeroVector, "cannot normalize a vector of norm " + std::to_string(norm));
  std::vector<float> out(v.dim());
  for (std::size_t i = 0; i < v.dim(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(v.components[i]) / norm);
  }
  return EmbeddingVector(std::move(out));
}

void EmbeddingStore::insert(std::string key, EmbeddingVector vec) {
  if (vec.dim() == 0) throw Error(ErrorCode::InvalidArgument, "empty vector for key '" + key + "'");
  if (dim_ && *dim_ != vec.dim()) {
    throw Error(ErrorCode::DimMismatch, "key '" + key + "' has dim " + std::to_string(vec.dim()) +
                                            ", store has dim " + std::to_string(*dim_));
  }
  if (!all_finite(vec.components)) {
    throw Error(ErrorCode::InvalidArgument, "non-finite component for key '" + key + "'");
  }
  if (entries_.contains(key)) throw Error(ErrorCode::InvalidArgument, "duplicate key '" + key + "'");
  dim_ = vec.dim();
  keys_.push_back(key);
  entries_.emplace(std::move(key), std::move(vec));
}

const EmbeddingVector* EmbeddingStore::find(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

const EmbeddingVector& EmbeddingStore::at(const std::string& key) const {
  if (const auto* v = find(key)) return *v;
  throw Error(ErrorCode::MissingKey, "no embedding for '" + key + "'");
}

EmbeddingStore parse_embedding_jsonl(std::string_view text, const std::string& source_name) {
  EmbeddingStore store;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    const std::string where = source_name + ":" + std::to_string(line_no);
    std::string key;
    std::vector<float> values;
    try {
      const json record = json::parse(line);
      key = record.at("key").get<std::string>();
      const auto& vec = record.at("vec");
      if (!vec.is_array()) throw Error(ErrorCode::ParseError, where + ": \"vec\" must be an array");
      values.reserve(vec.size());
      for (const auto& x : vec) {
        if (!x.is_number()) throw Error(ErrorCode::ParseError, where + ": non-numeric component");
        values.push_back(static_cast<float>(x.get<double>()));
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, where + ": " + e.what());
    }
    if (store.dim() && *store.dim() != values.size()) {
      throw Error(ErrorCode::DimMismatch, where + ": vector has dim " + std::to_string(values.size()) +
                                              ", expected " + std::to_string(*store.dim()));
    }
    try {
      store.insert(std::move(key), EmbeddingVector(std::move(values)));
    } catch (const Error& e) {
      throw Error(e.code() == ErrorCode::DimMismatch ? ErrorCode::DimMismatch : ErrorCode::ParseError,
                  where + ": " + e.what());
    }
  }
  return store;
}

EmbeddingStore load_embedding_file(const std::filesystem::path& path) {
  return parse_embedding_jsonl(read_file(path), path.string());
}

std::string to_embedding_jsonl(const EmbeddingStore& store) {
  std::string out;
  for (const auto& key : store.keys()) {
    const json record{{"key", key}, {"vec", store.at(key).components}};
    out += record.dump(-1, ' ', false, json::error_handler_t::replace);
    out += '\n';
  }
  return out;
}

void save_embedding_file(const EmbeddingStore& store, const std::filesystem::path& path) {
  write_file_atomic(path, to_embedding_jsonl(store));
}

std::vector<EmbeddingVector> embed_texts(std::span<const std::string> texts, TextEmbedder& backend) {
  auto vectors = backend.embed(texts);
  if (vectors.size() != texts.size()) {
    throw Error(ErrorCode::DimMismatch, "backend returned " + std::to_string(vectors.size()) + " vectors for " +
                                            std::to_string(texts.size()) + " texts");
  }
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].dim() == 0 || vectors[i].dim() != vectors.front().dim()) {
      throw Error(ErrorCode::DimMismatch, "vector for '" + texts[i] + "' has dim " +
                                              std::to_string(vectors[i].dim()) + ", expected " +
                                              std::to_string(vectors.front().dim()));
    }
  }
  return vectors;
}

std::vector<EmbeddingVector> StoreEmbedder::embed(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) out.push_back(store_->at(text));
  return out;
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

HashEmbedder::HashEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw Error(ErrorCode::ConfigError, "hash embedder needs dim > 0");
}

EmbeddingVector HashEmbedder::embed_one(const std::string& text) const {
  std::mt19937_64 gen(fnv1a64(text) ^ (seed_ * 0x9e3779b97f4a7c15ULL));
  std::vector<double> raw(dim_);
  double sum = 0.0;
  for (auto& x : raw) {
    x = static_cast<double>(gen() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    sum += x * x;
  }
  const double norm = std::sqrt(sum);
  std::vector<float> out(dim_);
  for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(raw[i] / norm);
  return EmbeddingVector(std::move(out));
}

std::vector<EmbeddingVector> HashEmbedder::embed(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) out.push_back(embed_one(text));
  return out;
}

HttpEmbedder::HttpEmbedder(std::string base_url, std::size_t parallelism, std::size_t batch_size,
                           std::chrono::milliseconds timeout)
    : parallelism_(std::max<std::size_t>(parallelism, 1)),
      batch_size_(std::max<std::size_t>(batch_size, 1)),
      timeout_(timeout) {
  auto parsed = parse_base_url(base_url);
  origin_ = std::move(parsed.origin);
  path_prefix_ = std::move(parsed.path_prefix);
}

std::vector<EmbeddingVector> HttpEmbedder::embed_batch(std::span<const std::string> texts) const {
  httplib::Client client(origin_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  const json body{{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  auto result = client.Post(path_prefix_ + "/embed_text", body.dump(-1, ' ', false, json::error_handler_t::replace),
                            "application/json");
  if (!result) throw Error(ErrorCode::TransportError, origin_ + ": " + httplib::to_string(result.error()));
  if (result->status != 200) {
    throw Error(ErrorCode::TransportError, "HTTP " + std::to_string(result->status) + " from " + origin_ + "/embed_text");
  }
  std::vector<EmbeddingVector> out;
  try {
    const json response = json::parse(result->body);
    const auto dim = response.at("dim").get<std::size_t>();
    for (const auto& vec : response.at("vectors")) {
      auto values = vec.get<std::vector<double>>();
      if (values.size() != dim) {
        throw Error(ErrorCode::DimMismatch, "service declared dim " + std::to_string(dim) + " but sent a vector of dim " +
                                                std::to_string(values.size()));
      }
      std::vector<float> floats(values.begin(), values.end());
      if (!all_finite(floats)) throw Error(ErrorCode::MalformedResponse, "non-finite embedding component");
      out.emplace_back(std::move(floats));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedResponse, std::string("unparsable embedding response: ") + e.what());
  }
  if (out.size() != texts.size()) {
    throw Error(ErrorCode::MalformedResponse, "asked for " + std::to_string(texts.size()) + " embeddings, got " +
                                                  std::to_string(out.size()));
  }
  return out;
}

std::vector<EmbeddingVector> HttpEmbedder::embed(std::span<const std::string> texts) {
  std::vector<std::span<const std::string>> batches;
  for (std::size_t i = 0; i < texts.size(); i += batch_size_) {
    batches.push_back(texts.subspan(i, std::min(batch_size_, texts.size() - i)));
  }
  std::vector<std::vector<EmbeddingVector>> results(batches.size());
  for (std::size_t wave = 0; wave < batches.size(); wave += parallelism_) {
    std::vector<std::future<std::vector<EmbeddingVector>>> pending;
    const auto stop = std::min(batches.size(), wave + parallelism_);
    for (std::size_t b = wave; b < stop; ++b) {
      pending.push_back(std::async(std::launch::async, [this, batch = batches[b]] { return embed_batch(batch); }));
    }
    for (std::size_t b = wave; b < stop; ++b) results[b] = pending[b - wave].get();
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (auto& r : results) std::move(r.begin(), r.end(), std::back_inserter(out));
  return out;
}

}  // namespace cupl
