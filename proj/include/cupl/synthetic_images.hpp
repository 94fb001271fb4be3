#pragma once

// Seeded synthetic image embeddings clustered around class centers.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cupl/embedding.hpp"
#include "cupl/eval.hpp"
#include "cupl/zeroshot.hpp"

namespace cupl::fixture {

struct WeightedPrototypes {
  const PrototypeSet* set = nullptr;
  double weight = 1.0;
};

struct SyntheticImageSpec {
  std::size_t per_class = 10;
  double sigma = 0.3;  // per-component gaussian noise
  std::uint64_t seed = 7;
};

struct SyntheticImages {
  EmbeddingStore images;
  DatasetManifest manifest;
};

/// Image key for the j-th image of a class: label with spaces replaced by
/// underscores, then a two-digit index.
std::string synthetic_image_key(const std::string& label, std::size_t j);

/// Each image is normalize(center + sigma * N(0, I)) where the center is the
/// weighted sum of the given prototypes of its class. Box-Muller over
/// mt19937_64 so the output is identical on every platform.
SyntheticImages synthesize_images(const std::vector<WeightedPrototypes>& centers, const std::string& dataset_id,
                                  const SyntheticImageSpec& spec);

}  // namespace cupl::fixture
