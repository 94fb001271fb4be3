#include "cupl/ablation.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "cupl/error.hpp"
#include "cupl/text.hpp"

namespace cupl {

namespace {

void require_context(const EvalContext& ctx) {
  if (!ctx.dataset || !ctx.manifest || !ctx.images || !ctx.embedder) {
    throw Error(ErrorCode::InvalidArgument, "evaluation context is incomplete");
  }
}

void require_provenance(const ImagePromptSet& store) {
  if (!store.has_provenance()) {
    throw Error(ErrorCode::ProvenanceMissing,
                "prompt store for '" + store.dataset_id + "' has no per-sentence template/completion indices");
  }
}

std::size_t count_value(double value) {
  if (!(value >= 1.0) || std::floor(value) != value) {
    throw Error(ErrorCode::InvalidArgument, "count sweep values must be positive integers, got " + format_shortest(value));
  }
  return static_cast<std::size_t>(value);
}

}  // namespace

std::vector<Prediction> classify_manifest(const EmbeddingStore& images, const DatasetManifest& manifest,
                                          const PrototypeSet& protos) {
  std::vector<Prediction> out;
  out.reserve(manifest.items.size());
  for (const auto& item : manifest.items) out.push_back(classify(images.at(item.image_key), protos, item.image_key));
  return out;
}

PipelineResult run_pipeline(const ImagePromptSet& prompts, const EvalContext& ctx, const EvalReport* baseline) {
  require_context(ctx);
  if (prompts.labels() != ctx.dataset->class_labels) {
    throw Error(ErrorCode::ClassMismatch, "prompt store labels differ from dataset '" + ctx.dataset->dataset_id + "'");
  }
  PipelineResult result;
  result.prototypes = build_prototype_set(prompts, *ctx.embedder, ctx.prototype_options);
  result.predictions = classify_manifest(*ctx.images, *ctx.manifest, result.prototypes);
  result.report = evaluate(result.predictions, std::string(to_string(prompts.mode)), *ctx.manifest, *ctx.dataset,
                           baseline);
  return result;
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::LlmPromptCount: return "llm-prompts";
    case SweepAxis::ImagePromptsPerTemplate: return "image-prompts";
    case SweepAxis::Temperature: return "temperature";
  }
  return "?";
}

SweepAxis parse_sweep_axis(std::string_view text) {
  if (text == "llm-prompts") return SweepAxis::LlmPromptCount;
  if (text == "image-prompts") return SweepAxis::ImagePromptsPerTemplate;
  if (text == "temperature") return SweepAxis::Temperature;
  throw Error(ErrorCode::InvalidArgument, "unknown sweep axis '" + std::string(text) + "'");
}

void SweepSpec::validate() const {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "sweep needs at least one value");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw Error(ErrorCode::InvalidArgument, "sweep values must be finite");
    if (i > 0 && !(values[i] > values[i - 1])) {
      throw Error(ErrorCode::InvalidArgument, "sweep values must be strictly increasing");
    }
  }
}

std::string SweepResult::to_csv() const {
  std::string out = "axis_value,metric,total_image_prompts\n";
  for (const auto& p : points) {
    out += format_shortest(p.value) + "," + format_fixed(p.metric, 4) + "," + std::to_string(p.total_image_prompts) + "\n";
  }
  return out;
}

ImagePromptSet filter_by_provenance(const ImagePromptSet& set, const std::function<bool(const PromptOrigin&)>& keep) {
  require_provenance(set);
  ImagePromptSet out = set;
  for (auto& cls : out.classes) {
    ClassPrompts kept;
    kept.label = cls.label;
    for (std::size_t i = 0; i < cls.sentences.size(); ++i) {
      if (!keep(cls.origins[i])) continue;
      kept.sentences.push_back(cls.sentences[i]);
      kept.origins.push_back(cls.origins[i]);
    }
    for (const auto& d : cls.dropped) {
      if (keep(d)) kept.dropped.push_back(d);
    }
    cls = std::move(kept);
  }
  return out;
}

std::size_t templates_in(const ImagePromptSet& set) {
  if (set.template_count > 0) return set.template_count;
  std::size_t n = 0;
  for (const auto& cls : set.classes) {
    for (const auto& o : cls.origins) n = std::max(n, o.template_index + 1);
    for (const auto& o : cls.dropped) n = std::max(n, o.template_index + 1);
  }
  return n;
}

std::size_t completions_per_template(const ImagePromptSet& set) {
  if (set.generation) return static_cast<std::size_t>(set.generation->completions_per_prompt);
  std::size_t n = 0;
  for (const auto& cls : set.classes) {
    for (const auto& o : cls.origins) n = std::max(n, o.completion_index + 1);
    for (const auto& o : cls.dropped) n = std::max(n, o.completion_index + 1);
  }
  return n;
}

SweepResult sweep_llm_prompt_count(const SweepSpec& spec, const ImagePromptSet& store, const EvalContext& ctx) {
  spec.validate();
  require_provenance(store);
  const auto available = templates_in(store);
  const auto per_template = completions_per_template(store);
  SweepResult result{SweepAxis::LlmPromptCount, {}};
  for (const double value : spec.values) {
    const auto k = count_value(value);
    if (k > available) {
      throw Error(ErrorCode::ValueExceedsAvailable, "store has " + std::to_string(available) +
                                                        " LLM-prompts, sweep asked for " + std::to_string(k));
    }
    const auto subset = filter_by_provenance(store, [k](const PromptOrigin& o) { return o.template_index < k; });
    const auto run = run_pipeline(subset, ctx);
    result.points.push_back({value, run.report.metric_value, k * per_template});
    spdlog::debug("llm-prompt sweep k={} metric={}", k, run.report.metric_value);
  }
  return result;
}

SweepResult sweep_image_prompt_count(const SweepSpec& spec, const ImagePromptSet& store, const EvalContext& ctx) {
  spec.validate();
  require_provenance(store);
  const auto templates = templates_in(store);
  const auto available = completions_per_template(store);
  SweepResult result{SweepAxis::ImagePromptsPerTemplate, {}};
  for (const double value : spec.values) {
    const auto m = count_value(value);
    if (m > available) {
      throw Error(ErrorCode::ValueExceedsAvailable, "store has " + std::to_string(available) +
                                                        " image-prompts per LLM-prompt, sweep asked for " +
                                                        std::to_string(m));
    }
    const auto subset = filter_by_provenance(store, [m](const PromptOrigin& o) { return o.completion_index < m; });
    const auto run = run_pipeline(subset, ctx);
    result.points.push_back({value, run.report.metric_value, m * templates});
    spdlog::debug("image-prompt sweep m={} metric={}", m, run.report.metric_value);
  }
  return result;
}

SweepResult sweep_temperature(const SweepSpec& spec, const TemperatureSweepInputs& inputs, const EvalContext& ctx) {
  spec.validate();
  require_context(ctx);
  if (!inputs.client) throw Error(ErrorCode::InvalidArgument, "temperature sweep needs an LLM client");
  std::vector<GenerationConfig> configs;
  for (const double t : spec.values) {
    auto config = inputs.base_config;
    config.temperature = t;
    config.validate();
    configs.push_back(std::move(config));
  }
  SweepResult result{SweepAxis::Temperature, {}};
  const std::vector<LlmPromptTemplate> templates{inputs.single_template};
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto prompts = generate_prompt_set(*ctx.dataset, templates, configs[i], *inputs.client,
                                             inputs.generate_options);
    const auto run = run_pipeline(prompts, ctx);
    result.points.push_back(
        {spec.values[i], run.report.metric_value, static_cast<std::size_t>(configs[i].completions_per_prompt)});
  }
  return result;
}

std::string BaselineComparison::to_csv() const {
  return "Standard,CuPL,WordNet\n" + format_fixed(standard, 2) + "," + format_fixed(cupl, 2) + "," +
         format_fixed(wordnet, 2) + "\n";
}

std::string BaselineComparison::to_text() const {
  const std::string header = "Standard     CuPL  WordNet";
  auto cell = [](double v, std::size_t width) {
    auto s = format_fixed(v, 2);
    return std::string(width > s.size() ? width - s.size() : 0, ' ') + s;
  };
  return header + "\n" + cell(standard, 8) + " " + cell(cupl, 8) + " " + cell(wordnet, 8) + "\n";
}

BaselineComparison compare_baselines(const BaselineRuns& runs, const EvalContext& ctx) {
  std::string missing;
  if (!runs.standard) missing += " standard";
  if (!runs.cupl) missing += " cupl_full";
  if (!runs.wordnet) missing += " wordnet";
  if (!missing.empty()) throw Error(ErrorCode::MissingRun, "comparison is missing:" + missing);
  BaselineComparison out;
  out.standard = run_pipeline(*runs.standard, ctx).report.metric_value;
  out.cupl = run_pipeline(*runs.cupl, ctx).report.metric_value;
  out.wordnet = run_pipeline(*runs.wordnet, ctx).report.metric_value;
  return out;
}

}  // namespace cupl
