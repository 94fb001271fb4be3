#pragma once

// Class prototypes, cosine classification and prompt-set ensembling.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cupl/embedding.hpp"
#include "cupl/prompt_factory.hpp"

namespace cupl {

struct ClassPrototype {
  std::size_t class_index = 0;
  std::string class_label;
  EmbeddingVector vector;  // unit norm
  std::size_t source_count = 0;
};

struct PrototypeSet {
  std::string dataset_id;
  std::string mode;
  std::vector<ClassPrototype> prototypes;
  std::size_t dim = 0;

  std::size_t size() const { return prototypes.size(); }
};

struct PrototypeOptions {
  /// Normalize every sentence embedding before averaging. When false the raw
  /// embeddings are averaged and only the mean is normalized.
  bool prenormalize = true;
};

/// Mean of the (normalized) inputs, renormalized. Throws EmptyInput,
/// DimMismatch, or ZeroVector when the mean vanishes.
EmbeddingVector build_prototype(std::span<const EmbeddingVector> sentence_vectors,
                                const PrototypeOptions& options = {});

PrototypeSet build_prototype_set(const ImagePromptSet& prompts, TextEmbedder& backend,
                                 const PrototypeOptions& options = {});

struct Prediction {
  std::string image_key;
  std::size_t predicted_index = 0;
  std::vector<double> scores;  // cosine per class

  double top_score() const { return scores.empty() ? 0.0 : scores[predicted_index]; }
};

/// Cosine against every prototype; argmax with ties going to the lowest index.
Prediction classify(const EmbeddingVector& image_vec, const PrototypeSet& protos, std::string image_key = {});

/// Concatenates the per-class sentence lists of two sets over the same labels.
ImagePromptSet concat_prompt_sets(const ImagePromptSet& a, const ImagePromptSet& b);

/// One prototype per class over the union of both sentence lists (not the
/// mean of the two per-set prototypes).
PrototypeSet ensemble_prototype_sets(const ImagePromptSet& a, const ImagePromptSet& b, TextEmbedder& backend,
                                     const PrototypeOptions& options = {});

/// JSONL keyed by class label plus a `<stem>.meta.json` sidecar.
void save_prototype_set(const PrototypeSet& set, const std::filesystem::path& path);
PrototypeSet load_prototype_set(const std::filesystem::path& path);

}  // namespace cupl
