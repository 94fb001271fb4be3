#include "cupl/zeroshot.hpp"

#include <cmath>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "cupl/error.hpp"
#include "cupl/io.hpp"

namespace cupl {

namespace {

constexpr double kZeroNorm = 1e-12;

}  // namespace

EmbeddingVector build_prototype(std::span<const EmbeddingVector> sentence_vectors, const PrototypeOptions& options) {
  if (sentence_vectors.empty()) throw Error(ErrorCode::EmptyInput, "prototype needs at least one vector");
  const std::size_t dim = sentence_vectors.front().dim();
  if (dim == 0) throw Error(ErrorCode::DimMismatch, "zero-dimensional embedding");

  std::vector<double> sum(dim, 0.0);
  for (const auto& v : sentence_vectors) {
    if (v.dim() != dim) {
      throw Error(ErrorCode::DimMismatch,
                  "prototype inputs have dims " + std::to_string(dim) + " and " + std::to_string(v.dim()));
    }
    double scale = 1.0;
    if (options.prenormalize) {
      const double norm = l2_norm(v.components);
      if (!(norm >= kZeroNorm)) throw Error(ErrorCode::ZeroVector, "sentence embedding has zero norm");
      scale = 1.0 / norm;
    }
    for (std::size_t i = 0; i < dim; ++i) sum[i] += static_cast<double>(v.components[i]) * scale;
  }

  const double count = static_cast<double>(sentence_vectors.size());
  double norm_sq = 0.0;
  for (auto& x : sum) {
    x /= count;
    norm_sq += x * x;
  }
  const double norm = std::sqrt(norm_sq);
  if (!(norm >= kZeroNorm)) throw Error(ErrorCode::ZeroVector, "mean embedding vanishes");

  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(sum[i] / norm);
  return EmbeddingVector(std::move(out));
}

PrototypeSet build_prototype_set(const ImagePromptSet& prompts, TextEmbedder& backend,
                                 const PrototypeOptions& options) {
  std::vector<std::string> unique_texts;
  std::unordered_map<std::string, std::size_t> text_index;
  for (const auto& cls : prompts.classes) {
    if (cls.sentences.empty()) throw Error(ErrorCode::EmptyClass, "class '" + cls.label + "' has no sentences");
    for (const auto& s : cls.sentences) {
      if (text_index.emplace(s, unique_texts.size()).second) unique_texts.push_back(s);
    }
  }
  const auto vectors = embed_texts(unique_texts, backend);

  PrototypeSet set;
  set.dataset_id = prompts.dataset_id;
  set.mode = std::string(to_string(prompts.mode));
  for (std::size_t c = 0; c < prompts.classes.size(); ++c) {
    const auto& cls = prompts.classes[c];
    std::vector<EmbeddingVector> members;
    members.reserve(cls.sentences.size());
    for (const auto& s : cls.sentences) members.push_back(vectors[text_index.at(s)]);
    set.prototypes.push_back(ClassPrototype{c, cls.label, build_prototype(members, options), members.size()});
  }
  set.dim = set.prototypes.empty() ? 0 : set.prototypes.front().vector.dim();
  return set;
}

Prediction classify(const EmbeddingVector& image_vec, const PrototypeSet& protos, std::string image_key) {
  if (protos.prototypes.empty()) throw Error(ErrorCode::EmptyInput, "no prototypes to classify against");
  if (image_vec.dim() != protos.dim) {
    throw Error(ErrorCode::DimMismatch, "image embedding '" + image_key + "' has dim " +
                                            std::to_string(image_vec.dim()) + ", prototypes have dim " +
                                            std::to_string(protos.dim));
  }
  const double norm = l2_norm(image_vec.components);
  if (!(norm >= kZeroNorm)) throw Error(ErrorCode::ZeroVector, "image embedding '" + image_key + "' has zero norm");

  Prediction p;
  p.image_key = std::move(image_key);
  p.scores.reserve(protos.size());
  for (const auto& proto : protos.prototypes) {
    const double score = dot(image_vec.components, proto.vector.components) / norm;
    if (p.scores.empty() || score > p.scores[p.predicted_index]) p.predicted_index = p.scores.size();
    p.scores.push_back(score);
  }
  return p;
}

ImagePromptSet concat_prompt_sets(const ImagePromptSet& a, const ImagePromptSet& b) {
  // An empty id comes from a store without a sidecar and matches any dataset.
  if (!a.dataset_id.empty() && !b.dataset_id.empty() && a.dataset_id != b.dataset_id) {
    throw Error(ErrorCode::ClassMismatch, "cannot ensemble datasets '" + a.dataset_id + "' and '" + b.dataset_id + "'");
  }
  if (a.labels() != b.labels()) {
    throw Error(ErrorCode::ClassMismatch, "prompt sets for '" + a.dataset_id + "' have different class labels");
  }
  ImagePromptSet out;
  out.dataset_id = a.dataset_id.empty() ? b.dataset_id : a.dataset_id;
  out.mode = PromptMode::Ensemble;
  for (std::size_t c = 0; c < a.classes.size(); ++c) {
    ClassPrompts cls;
    cls.label = a.classes[c].label;
    cls.sentences = a.classes[c].sentences;
    cls.sentences.insert(cls.sentences.end(), b.classes[c].sentences.begin(), b.classes[c].sentences.end());
    out.classes.push_back(std::move(cls));
  }
  return out;
}

PrototypeSet ensemble_prototype_sets(const ImagePromptSet& a, const ImagePromptSet& b, TextEmbedder& backend,
                                     const PrototypeOptions& options) {
  return build_prototype_set(concat_prompt_sets(a, b), backend, options);
}

void save_prototype_set(const PrototypeSet& set, const std::filesystem::path& path) {
  EmbeddingStore store;
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (const auto& p : set.prototypes) {
    store.insert(p.class_label, p.vector);
    classes.push_back({{"label", p.class_label}, {"source_count", p.source_count}});
  }
  nlohmann::ordered_json meta;
  meta["dataset_id"] = set.dataset_id;
  meta["mode"] = set.mode;
  meta["dim"] = set.dim;
  meta["classes"] = std::move(classes);
  save_embedding_file(store, path);
  auto meta_path = path;
  meta_path.replace_extension(".meta.json");
  write_file_atomic(meta_path, meta.dump(2, ' ', false, nlohmann::ordered_json::error_handler_t::replace) + "\n");
}

PrototypeSet load_prototype_set(const std::filesystem::path& path) {
  const auto store = load_embedding_file(path);
  PrototypeSet set;
  set.dim = store.dim().value_or(0);
  std::unordered_map<std::string, std::size_t> counts;
  auto meta_path = path;
  meta_path.replace_extension(".meta.json");
  if (std::filesystem::exists(meta_path)) {
    try {
      const auto meta = nlohmann::json::parse(read_file(meta_path));
      set.dataset_id = meta.value("dataset_id", "");
      set.mode = meta.value("mode", "");
      for (const auto& c : meta.at("classes")) {
        counts[c.at("label").get<std::string>()] = c.at("source_count").get<std::size_t>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, meta_path.string() + ": " + e.what());
    }
  }
  for (const auto& key : store.keys()) {
    const auto& vec = store.at(key);
    const double norm = l2_norm(vec.components);
    if (std::abs(norm - 1.0) > 1e-5) {
      throw Error(ErrorCode::ParseError, path.string() + ": prototype '" + key + "' is not unit norm");
    }
    const auto it = counts.find(key);
    set.prototypes.push_back(ClassPrototype{set.prototypes.size(), key, vec, it == counts.end() ? 1 : it->second});
  }
  return set;
}

}  // namespace cupl
