#pragma once

// Embedding vectors, JSONL stores and text-embedding backends.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace cupl {

/// 32-bit storage; every computation over it accumulates in 64-bit.
struct EmbeddingVector {
  std::vector<float> components;

  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<float> values) : components(std::move(values)) {}

  std::size_t dim() const { return components.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

double l2_norm(std::span<const float> v);
double dot(std::span<const float> a, std::span<const float> b);

/// v / ||v||. Throws ZeroVector when ||v|| < 1e-12.
EmbeddingVector normalize(const EmbeddingVector& v);

/// Keyed vectors of one dimension, kept in insertion order.
class EmbeddingStore {
 public:
  std::optional<std::size_t> dim() const { return dim_; }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }
  const std::vector<std::string>& keys() const { return keys_; }

  /// Throws DimMismatch on a length different from the store's, and
  /// InvalidArgument on a duplicate key or non-finite component.
  void insert(std::string key, EmbeddingVector vec);
  bool contains(const std::string& key) const { return entries_.contains(key); }
  const EmbeddingVector* find(const std::string& key) const;
  /// Throws MissingKey naming the key.
  const EmbeddingVector& at(const std::string& key) const;

 private:
  std::optional<std::size_t> dim_;
  std::vector<std::string> keys_;
  std::unordered_map<std::string, EmbeddingVector> entries_;
};

/// JSONL, one {"key": ..., "vec": [...]} per line. Blank lines are skipped.
EmbeddingStore load_embedding_file(const std::filesystem::path& path);
EmbeddingStore parse_embedding_jsonl(std::string_view text, const std::string& source_name = "<memory>");
std::string to_embedding_jsonl(const EmbeddingStore& store);
void save_embedding_file(const EmbeddingStore& store, const std::filesystem::path& path);

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  /// One vector per text, in input order.
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
};

/// Order-preserving embedding with a uniform-dimension check on the result.
std::vector<EmbeddingVector> embed_texts(std::span<const std::string> texts, TextEmbedder& backend);

/// Resolves texts by exact key in a precomputed store.
class StoreEmbedder final : public TextEmbedder {
 public:
  explicit StoreEmbedder(std::shared_ptr<const EmbeddingStore> store) : store_(std::move(store)) {}
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;

 private:
  std::shared_ptr<const EmbeddingStore> store_;
};

/// Deterministic fixture backend: the text's FNV-1a hash (mixed with `seed`)
/// seeds a generator whose first `dim` draws in [-1, 1) are normalized.
class HashEmbedder final : public TextEmbedder {
 public:
  HashEmbedder(std::size_t dim, std::uint64_t seed = 0);
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
  EmbeddingVector embed_one(const std::string& text) const;
  std::size_t dim() const { return dim_; }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

std::uint64_t fnv1a64(std::string_view text);

/// POST <base_url>/embed_text {"texts": [...]} -> {"dim", "vectors"}.
class HttpEmbedder final : public TextEmbedder {
 public:
  HttpEmbedder(std::string base_url, std::size_t parallelism = 4, std::size_t batch_size = 64,
               std::chrono::milliseconds timeout = std::chrono::milliseconds{60'000});
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;

 private:
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const;

  std::string origin_;
  std::string path_prefix_;
  std::size_t parallelism_;
  std::size_t batch_size_;
  std::chrono::milliseconds timeout_;
};

}  // namespace cupl
