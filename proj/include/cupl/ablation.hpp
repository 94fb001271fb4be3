#pragma once

// Subset and temperature sweeps over prompt stores, and the three-way
// Standard | CuPL | WordNet comparison.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cupl/catalog.hpp"
#include "cupl/embedding.hpp"
#include "cupl/eval.hpp"
#include "cupl/llm_gateway.hpp"
#include "cupl/prompt_factory.hpp"
#include "cupl/zeroshot.hpp"

namespace cupl {

/// Everything needed to turn a prompt set into a metric.
struct EvalContext {
  const DatasetSpec* dataset = nullptr;
  const DatasetManifest* manifest = nullptr;
  const EmbeddingStore* images = nullptr;
  TextEmbedder* embedder = nullptr;
  PrototypeOptions prototype_options;
};

/// Classifies every manifest image (manifest order). Throws MissingKey for an
/// image absent from the store.
std::vector<Prediction> classify_manifest(const EmbeddingStore& images, const DatasetManifest& manifest,
                                          const PrototypeSet& protos);

struct PipelineResult {
  PrototypeSet prototypes;
  std::vector<Prediction> predictions;
  EvalReport report;
};

PipelineResult run_pipeline(const ImagePromptSet& prompts, const EvalContext& ctx,
                            const EvalReport* baseline = nullptr);

enum class SweepAxis { LlmPromptCount, ImagePromptsPerTemplate, Temperature };

std::string_view to_string(SweepAxis axis);
/// Accepts "llm-prompts", "image-prompts" and "temperature".
SweepAxis parse_sweep_axis(std::string_view text);

struct SweepSpec {
  SweepAxis axis = SweepAxis::ImagePromptsPerTemplate;
  std::vector<double> values;

  /// InvalidArgument unless values are non-empty and strictly increasing.
  void validate() const;
};

struct SweepPoint {
  double value = 0.0;
  double metric = 0.0;
  std::size_t total_image_prompts = 0;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::ImagePromptsPerTemplate;
  std::vector<SweepPoint> points;

  /// `axis_value,metric,total_image_prompts`, metric with four decimals.
  std::string to_csv() const;
};

/// Sentences whose origin satisfies `keep`, in their original order.
ImagePromptSet filter_by_provenance(const ImagePromptSet& set, const std::function<bool(const PromptOrigin&)>& keep);

/// Templates in the store (from the sidecar, else inferred from provenance).
std::size_t templates_in(const ImagePromptSet& set);
/// Completions requested per template (from the generation config, else inferred).
std::size_t completions_per_template(const ImagePromptSet& set);

/// Keeps sentences with template_index < k for each k.
SweepResult sweep_llm_prompt_count(const SweepSpec& spec, const ImagePromptSet& store, const EvalContext& ctx);

/// Keeps sentences with completion_index < m for each m.
SweepResult sweep_image_prompt_count(const SweepSpec& spec, const ImagePromptSet& store, const EvalContext& ctx);

struct TemperatureSweepInputs {
  LlmPromptTemplate single_template;
  GenerationConfig base_config;
  CompletionClient* client = nullptr;
  GenerateOptions generate_options;
};

/// Regenerates a single-template prompt set at every temperature.
SweepResult sweep_temperature(const SweepSpec& spec, const TemperatureSweepInputs& inputs, const EvalContext& ctx);

struct BaselineRuns {
  std::optional<ImagePromptSet> standard;
  std::optional<ImagePromptSet> cupl;
  std::optional<ImagePromptSet> wordnet;
};

struct BaselineComparison {
  double standard = 0.0;
  double cupl = 0.0;
  double wordnet = 0.0;

  /// Header `Standard,CuPL,WordNet` and one row with two decimals.
  std::string to_csv() const;
  std::string to_text() const;
};

/// Throws MissingRun naming any absent store.
BaselineComparison compare_baselines(const BaselineRuns& runs, const EvalContext& ctx);

}  // namespace cupl
