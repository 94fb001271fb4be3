#pragma once

// Image-prompt generation, cleaning, and prompt-store persistence.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cupl/catalog.hpp"
#include "cupl/error.hpp"
#include "cupl/llm_gateway.hpp"

namespace cupl {

enum class PromptMode { CuplSingle, CuplFull, Standard, WordNet, Ensemble };

std::string_view to_string(PromptMode mode);
PromptMode parse_prompt_mode(std::string_view text);

/// Which template and which completion of its batch produced a sentence.
struct PromptOrigin {
  std::size_t template_index = 0;
  std::size_t completion_index = 0;

  bool operator==(const PromptOrigin&) const = default;
};

struct ClassPrompts {
  std::string label;
  std::vector<std::string> sentences;
  std::vector<PromptOrigin> origins;  // parallel to sentences when provenance is known
  std::vector<PromptOrigin> dropped;  // completions whose cleaning came out empty

  bool operator==(const ClassPrompts&) const = default;
};

struct ImagePromptSet {
  std::string dataset_id;
  PromptMode mode = PromptMode::CuplFull;
  std::vector<ClassPrompts> classes;  // DatasetSpec label order
  std::optional<GenerationConfig> generation;
  std::size_t template_count = 0;

  bool has_provenance() const;
  const ClassPrompts* find(std::string_view label) const;
  std::vector<std::string> labels() const;
  std::size_t total_sentences() const;
};

/// Blank lines removed, survivors trimmed and joined by one space, a period
/// appended if missing. Empty when nothing remains.
std::optional<std::string> clean_completion(std::string_view raw);

struct GenerateOptions {
  std::optional<std::filesystem::path> cache_dir;  // no caching when absent
  std::size_t parallelism = 4;                     // concurrent classes
  ArticleOverrides article_overrides;
};

/// Thrown when some classes failed; carries the classes that did complete.
class GenerationError : public Error {
 public:
  GenerationError(ErrorCode code, const std::string& message, ImagePromptSet partial)
      : Error(code, message), partial_(std::move(partial)) {}
  const ImagePromptSet& partial() const { return partial_; }

 private:
  ImagePromptSet partial_;
};

ImagePromptSet generate_prompt_set(const DatasetSpec& dataset, std::span<const LlmPromptTemplate> templates,
                                   const GenerationConfig& config, CompletionClient& client,
                                   const GenerateOptions& options = {});

ImagePromptSet standard_prompt_set(const DatasetSpec& dataset, std::span<const LlmPromptTemplate> templates);

struct WordNetDefinition {
  std::string class_label;
  std::string definition_text;
};

/// "A(n) <label> is <definition>." with exactly one terminal period.
std::string wordnet_prompt(const WordNetDefinition& def, const ArticleOverrides& overrides = {});

/// JSONL of {"label", "definition"}.
std::vector<WordNetDefinition> load_wordnet_definitions(const std::filesystem::path& path);

ImagePromptSet wordnet_prompt_set(const DatasetSpec& dataset, std::span<const WordNetDefinition> defs,
                                  const ArticleOverrides& overrides = {});

/// `<stem>.meta.json` next to a `<stem>.json` store.
std::filesystem::path meta_path_for(const std::filesystem::path& store_path);

std::string prompt_store_json(const ImagePromptSet& set);
std::string prompt_store_meta_json(const ImagePromptSet& set);
void save_prompt_store(const ImagePromptSet& set, const std::filesystem::path& path);
/// Loads a store and, if present, its sidecar. Without a sidecar the set has
/// no provenance and an empty dataset id.
ImagePromptSet load_prompt_store(const std::filesystem::path& path);

}  // namespace cupl
