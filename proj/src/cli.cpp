#include "cupl/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <iostream>
#include <memory>
#include <optional>

#include "cupl/ablation.hpp"
#include "cupl/catalog.hpp"
#include "cupl/config.hpp"
#include "cupl/error.hpp"
#include "cupl/eval.hpp"
#include "cupl/io.hpp"
#include "cupl/llm_gateway.hpp"
#include "cupl/prompt_factory.hpp"
#include "cupl/text.hpp"
#include "cupl/zeroshot.hpp"

namespace cupl::cli {

namespace {

int exit_code_for(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::Config: return 2;
    case ErrorCategory::Upstream: return 3;
    case ErrorCategory::Io: return 4;
  }
  return 1;
}

/// Flags that override RunConfig fields. Only flags the user actually passed
/// are applied, after the config file and the environment.
struct Overrides {
  std::string config_file;
  std::string log_level;

  std::string dataset, catalog_dir, out_dir, cache_dir;
  std::size_t parallelism = 0;

  std::string llm_url, api_key, model;
  double temperature = 0.0;
  int max_tokens = 0, completions = 0, max_retries = 0;
  long timeout_ms = 0;

  std::string embed_backend, embed_file, embed_url;
  std::size_t embed_dim = 0;
  std::uint64_t embed_seed = 0;
  bool no_prenormalize = false;

  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> setters;

  template <typename T, typename Apply>
  void add(CLI::App* app, const std::string& name, T& target, const std::string& help, Apply apply) {
    setters.emplace_back(app->add_option(name, target, help), apply);
  }

  void add_common(CLI::App* app) {
    add(app, "--config", config_file, "TOML config file", [](RunConfig&) {});
    add(app, "--log-level", log_level, "trace, debug, info, warn, error or off",
        [this](RunConfig& c) { c.log_level = log_level; });
  }

  void add_dataset(CLI::App* app) {
    add(app, "--dataset", dataset, "dataset id from the catalog", [this](RunConfig& c) { c.dataset_id = dataset; });
    add(app, "--catalog", catalog_dir, "catalog directory", [this](RunConfig& c) { c.catalog_dir = catalog_dir; });
  }

  void add_llm(CLI::App* app) {
    add(app, "--llm-url", llm_url, "completions endpoint base URL", [this](RunConfig& c) { c.llm.base_url = llm_url; });
    add(app, "--api-key", api_key, "API key (or CUPL_API_KEY)", [this](RunConfig& c) { c.llm.api_key = api_key; });
    add(app, "--model", model, "LLM model name", [this](RunConfig& c) { c.llm.generation.model = model; });
    add(app, "--temperature", temperature, "sampling temperature",
        [this](RunConfig& c) { c.llm.generation.temperature = temperature; });
    add(app, "--max-tokens", max_tokens, "token limit per completion",
        [this](RunConfig& c) { c.llm.generation.max_tokens = max_tokens; });
    add(app, "--completions", completions, "completions per LLM-prompt",
        [this](RunConfig& c) { c.llm.generation.completions_per_prompt = completions; });
    add(app, "--max-retries", max_retries, "retries on rate limits and transport errors",
        [this](RunConfig& c) { c.llm.generation.max_retries = max_retries; });
    add(app, "--timeout-ms", timeout_ms, "per-request timeout",
        [this](RunConfig& c) { c.llm.generation.request_timeout = std::chrono::milliseconds(timeout_ms); });
    add(app, "--cache-dir", cache_dir, "completion cache directory", [this](RunConfig& c) { c.cache_dir = cache_dir; });
    add(app, "--parallelism", parallelism, "concurrent requests",
        [this](RunConfig& c) { c.parallelism = parallelism; });
  }

  void add_embedding(CLI::App* app) {
    add(app, "--embed-backend", embed_backend, "hash, file or http",
        [this](RunConfig& c) { c.embedding.backend = parse_embed_backend(embed_backend); });
    add(app, "--embed-dim", embed_dim, "hash backend dimension", [this](RunConfig& c) { c.embedding.dim = embed_dim; });
    add(app, "--embed-seed", embed_seed, "hash backend seed", [this](RunConfig& c) { c.embedding.seed = embed_seed; });
    add(app, "--embed-file", embed_file, "JSONL text-embedding store for the file backend",
        [this](RunConfig& c) { c.embedding.file = embed_file; });
    add(app, "--embed-url", embed_url, "embedding service base URL", [this](RunConfig& c) { c.embedding.url = embed_url; });
    setters.emplace_back(app->add_flag("--no-prenormalize", no_prenormalize,
                                       "average raw sentence embeddings before normalizing"),
                         [](RunConfig& c) { c.embedding.prenormalize = false; });
  }

  RunConfig resolve() const {
    RunConfig config;
    std::string file = config_file;
    if (file.empty()) {
      if (auto env = process_environment()("CUPL_CONFIG")) file = *env;
    }
    if (!file.empty()) apply_config_file(config, file);
    apply_environment(config, process_environment());
    for (const auto& [option, apply] : setters) {
      if (option->count() > 0) apply(config);
    }
    config.validate();
    return config;
  }
};

void configure_logging(const std::string& level, std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("cupl", sink);
  logger->set_pattern("[%l] %v");
  const auto parsed = spdlog::level::from_str(level);
  if (parsed == spdlog::level::off && level != "off") {
    throw Error(ErrorCode::ConfigError, "unknown log level '" + level + "'");
  }
  logger->set_level(parsed);
  spdlog::set_default_logger(logger);
}

std::unique_ptr<TextEmbedder> make_embedder(const RunConfig& config) {
  switch (config.embedding.backend) {
    case EmbedBackend::Hash:
      return std::make_unique<HashEmbedder>(config.embedding.dim, config.embedding.seed);
    case EmbedBackend::File:
      return std::make_unique<StoreEmbedder>(
          std::make_shared<const EmbeddingStore>(load_embedding_file(config.embedding.file)));
    case EmbedBackend::Http:
      return std::make_unique<HttpEmbedder>(config.embedding.url, config.parallelism);
  }
  throw Error(ErrorCode::ConfigError, "no embedding backend");
}

PrototypeOptions prototype_options(const RunConfig& config) {
  PrototypeOptions options;
  options.prenormalize = config.embedding.prenormalize;
  return options;
}

const DatasetSpec& require_dataset(const TemplateCatalog& catalog, const RunConfig& config) {
  if (config.dataset_id.empty()) throw Error(ErrorCode::ConfigError, "no dataset given (--dataset)");
  return catalog.dataset(config.dataset_id);
}

std::unique_ptr<HttpCompletionClient> make_llm_client(const RunConfig& config, const std::string& mode) {
  if (config.llm.api_key.empty()) {
    throw Error(ErrorCode::ConfigError,
                "mode '" + mode + "' calls the LLM but no API key is set; export CUPL_API_KEY or pass --api-key");
  }
  return std::make_unique<HttpCompletionClient>(LlmEndpoint{config.llm.base_url, config.llm.api_key},
                                                config.parallelism);
}

GenerateOptions generate_options(const RunConfig& config, const TemplateCatalog& catalog) {
  GenerateOptions options;
  options.cache_dir = config.cache_dir;
  options.parallelism = config.parallelism;
  options.article_overrides = catalog.article_overrides();
  return options;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> values;
  for (const auto& part : split(text, ',')) {
    const auto t = std::string(trim(part));
    if (t.empty()) continue;
    try {
      std::size_t used = 0;
      values.push_back(std::stod(t, &used));
      if (used != t.size()) throw std::invalid_argument(t);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, "bad sweep value '" + t + "'");
    }
  }
  return values;
}

void emit(std::ostream& out, const std::string& text, const std::string& path) {
  if (!path.empty()) write_file_atomic(path, text);
  out << text;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Customized-prompt zero-shot classification pipeline", "cupl"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  // generate
  Overrides gen_flags;
  std::string gen_mode, gen_wordnet;
  auto* generate = app.add_subcommand("generate", "build a prompt store for one dataset");
  gen_flags.add_common(generate);
  gen_flags.add_dataset(generate);
  gen_flags.add_llm(generate);
  generate->add_option("--mode", gen_mode, "single, full, standard or wordnet")->required();
  generate->add_option("--wordnet", gen_wordnet, "JSONL of {label, definition} for wordnet mode");
  gen_flags.add(generate, "--out", gen_flags.out_dir, "output directory",
                [&gen_flags](RunConfig& c) { c.out_dir = gen_flags.out_dir; });

  // classify
  Overrides cls_flags;
  std::string cls_store, cls_protos, cls_images, cls_manifest, cls_out, cls_protos_out;
  auto* classify_cmd = app.add_subcommand("classify", "predict a class for every image embedding");
  cls_flags.add_common(classify_cmd);
  cls_flags.add_embedding(classify_cmd);
  auto* store_opt = classify_cmd->add_option("--store", cls_store, "prompt store JSON");
  auto* protos_opt = classify_cmd->add_option("--prototypes", cls_protos, "prototype JSONL (from ensemble)");
  store_opt->excludes(protos_opt);
  classify_cmd->add_option("--images", cls_images, "image embedding JSONL")->required();
  classify_cmd->add_option("--manifest", cls_manifest, "restrict and order images by this manifest");
  classify_cmd->add_option("--out", cls_out, "predictions CSV")->required();
  classify_cmd->add_option("--prototypes-out", cls_protos_out, "also write the prototypes");

  // eval
  Overrides eval_flags;
  std::string eval_predictions, eval_manifest, eval_mode = "run", eval_baseline, eval_report_out, eval_out;
  std::vector<std::string> eval_reports;
  auto* eval_cmd = app.add_subcommand("eval", "score predictions and render a comparison table");
  eval_flags.add_common(eval_cmd);
  eval_flags.add_dataset(eval_cmd);
  eval_cmd->add_option("--predictions", eval_predictions, "predictions CSV");
  eval_cmd->add_option("--manifest", eval_manifest, "manifest CSV with image_key,true_index");
  eval_cmd->add_option("--mode", eval_mode, "method name for the report row");
  eval_cmd->add_option("--baseline", eval_baseline, "baseline report JSON for the delta row");
  eval_cmd->add_option("--report-out", eval_report_out, "write the report JSON here");
  eval_cmd->add_option("--reports", eval_reports, "more report JSON files to include in the table");
  eval_cmd->add_option("--out", eval_out, "table CSV");

  // ensemble
  Overrides ens_flags;
  std::vector<std::string> ens_inputs;
  std::string ens_out, ens_store_out;
  auto* ensemble = app.add_subcommand("ensemble", "one prototype per class over the union of two prompt stores");
  ens_flags.add_common(ensemble);
  ens_flags.add_embedding(ensemble);
  ensemble->add_option("stores", ens_inputs, "two prompt stores")->required()->expected(2);
  ensemble->add_option("--out", ens_out, "prototype JSONL")->required();
  ensemble->add_option("--store-out", ens_store_out, "also write the concatenated prompt store");

  // ablate
  Overrides abl_flags;
  std::string abl_axis, abl_values, abl_store, abl_images, abl_manifest, abl_out;
  std::string abl_standard, abl_cupl, abl_wordnet;
  auto* ablate = app.add_subcommand("ablate", "prompt-count, temperature and baseline sweeps");
  abl_flags.add_common(ablate);
  abl_flags.add_dataset(ablate);
  abl_flags.add_llm(ablate);
  abl_flags.add_embedding(ablate);
  ablate->add_option("--axis", abl_axis, "llm-prompts, image-prompts, temperature or baselines")->required();
  ablate->add_option("--values", abl_values, "comma-separated, strictly increasing");
  ablate->add_option("--store", abl_store, "prompt store with provenance");
  ablate->add_option("--images", abl_images, "image embedding JSONL")->required();
  ablate->add_option("--manifest", abl_manifest, "manifest CSV")->required();
  ablate->add_option("--standard", abl_standard, "standard prompt store (baselines)");
  ablate->add_option("--cupl", abl_cupl, "CuPL prompt store (baselines)");
  ablate->add_option("--wordnet", abl_wordnet, "WordNet prompt store (baselines)");
  ablate->add_option("--out", abl_out, "result CSV");

  // catalog stats
  Overrides cat_flags;
  std::string cat_out;
  auto* catalog_cmd = app.add_subcommand("catalog", "inspect the template catalog");
  catalog_cmd->require_subcommand(1);
  auto* stats = catalog_cmd->add_subcommand("stats", "template counts per dataset and mode");
  cat_flags.add_common(stats);
  cat_flags.add(stats, "--catalog", cat_flags.catalog_dir, "catalog directory",
                [&cat_flags](RunConfig& c) { c.catalog_dir = cat_flags.catalog_dir; });
  stats->add_option("--out", cat_out, "CSV output");

  std::vector<const char*> argv{"cupl"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (generate->parsed()) {
      const auto config = gen_flags.resolve();
      configure_logging(config.log_level, err);
      const auto catalog = load_catalog(config.catalog_dir);
      const auto& dataset = require_dataset(catalog, config);
      const auto mode = parse_prompt_mode(gen_mode);
      const auto path = config.out_dir / (dataset.dataset_id + "_" + gen_mode + ".json");

      ImagePromptSet set;
      switch (mode) {
        case PromptMode::CuplSingle:
        case PromptMode::CuplFull: {
          auto client = make_llm_client(config, gen_mode);
          const auto& templates = catalog.templates(
              dataset.dataset_id, mode == PromptMode::CuplSingle ? CatalogMode::Single : CatalogMode::Full);
          try {
            set = generate_prompt_set(dataset, templates, config.llm.generation, *client,
                                      generate_options(config, catalog));
          } catch (const GenerationError& e) {
            auto partial = config.out_dir / (dataset.dataset_id + "_" + gen_mode + ".partial.json");
            save_prompt_store(e.partial(), partial);
            err << "wrote " << e.partial().classes.size() << " completed classes to " << partial.string() << "\n";
            throw;
          }
          break;
        }
        case PromptMode::Standard:
          set = standard_prompt_set(dataset, catalog.templates(dataset.dataset_id, CatalogMode::Standard));
          break;
        case PromptMode::WordNet: {
          if (gen_wordnet.empty()) throw Error(ErrorCode::ConfigError, "wordnet mode needs --wordnet FILE");
          const auto defs = load_wordnet_definitions(gen_wordnet);
          set = wordnet_prompt_set(dataset, defs, catalog.article_overrides());
          break;
        }
        case PromptMode::Ensemble:
          throw Error(ErrorCode::ConfigError, "use the ensemble subcommand to combine stores");
      }
      save_prompt_store(set, path);
      out << path.string() << "\n";
      return 0;
    }

    if (classify_cmd->parsed()) {
      const auto config = cls_flags.resolve();
      configure_logging(config.log_level, err);
      if (cls_store.empty() && cls_protos.empty()) {
        throw Error(ErrorCode::ConfigError, "classify needs --store or --prototypes");
      }
      PrototypeSet protos;
      if (!cls_store.empty()) {
        const auto store = load_prompt_store(cls_store);
        auto embedder = make_embedder(config);
        protos = build_prototype_set(store, *embedder, prototype_options(config));
      } else {
        protos = load_prototype_set(cls_protos);
      }
      if (!cls_protos_out.empty()) save_prototype_set(protos, cls_protos_out);
      const auto images = load_embedding_file(cls_images);
      std::vector<Prediction> predictions;
      if (!cls_manifest.empty()) {
        predictions = classify_manifest(images, load_manifest(cls_manifest), protos);
      } else {
        for (const auto& key : images.keys()) predictions.push_back(classify(images.at(key), protos, key));
      }
      write_file_atomic(cls_out, predictions_csv(predictions));
      out << cls_out << "\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      const auto config = eval_flags.resolve();
      configure_logging(config.log_level, err);
      std::vector<EvalReport> reports;
      std::optional<EvalReport> baseline;
      if (!eval_baseline.empty()) baseline = load_report(eval_baseline);
      if (baseline) reports.push_back(*baseline);
      if (!eval_predictions.empty()) {
        if (eval_manifest.empty()) throw Error(ErrorCode::ConfigError, "eval needs --manifest with --predictions");
        const auto catalog = load_catalog(config.catalog_dir);
        const auto& dataset = require_dataset(catalog, config);
        const auto manifest = load_manifest(eval_manifest, dataset.dataset_id);
        const auto predictions = load_predictions(eval_predictions);
        auto report = evaluate(predictions, eval_mode, manifest, dataset, baseline ? &*baseline : nullptr);
        if (!eval_report_out.empty()) save_report(report, eval_report_out);
        reports.push_back(std::move(report));
      }
      for (const auto& path : eval_reports) reports.push_back(load_report(path));
      if (reports.empty()) throw Error(ErrorCode::ConfigError, "eval needs --predictions or --reports");
      const auto table = render_report_table(reports);
      if (!eval_out.empty()) write_file_atomic(eval_out, table.csv);
      out << table.text;
      return 0;
    }

    if (ensemble->parsed()) {
      const auto config = ens_flags.resolve();
      configure_logging(config.log_level, err);
      const auto a = load_prompt_store(ens_inputs.at(0));
      const auto b = load_prompt_store(ens_inputs.at(1));
      auto embedder = make_embedder(config);
      const auto combined = concat_prompt_sets(a, b);
      if (!ens_store_out.empty()) save_prompt_store(combined, ens_store_out);
      const auto protos = build_prototype_set(combined, *embedder, prototype_options(config));
      save_prototype_set(protos, ens_out);
      out << ens_out << "\n";
      return 0;
    }

    if (ablate->parsed()) {
      const auto config = abl_flags.resolve();
      configure_logging(config.log_level, err);
      const auto catalog = load_catalog(config.catalog_dir);
      const auto& dataset = require_dataset(catalog, config);
      const auto manifest = load_manifest(abl_manifest, dataset.dataset_id);
      const auto images = load_embedding_file(abl_images);
      auto embedder = make_embedder(config);
      EvalContext ctx{&dataset, &manifest, &images, embedder.get(), prototype_options(config)};

      if (abl_axis == "baselines") {
        BaselineRuns runs;
        if (!abl_standard.empty()) runs.standard = load_prompt_store(abl_standard);
        if (!abl_cupl.empty()) runs.cupl = load_prompt_store(abl_cupl);
        if (!abl_wordnet.empty()) runs.wordnet = load_prompt_store(abl_wordnet);
        const auto comparison = compare_baselines(runs, ctx);
        if (!abl_out.empty()) write_file_atomic(abl_out, comparison.to_csv());
        out << comparison.to_text();
        return 0;
      }

      SweepSpec spec{parse_sweep_axis(abl_axis), parse_values(abl_values)};
      SweepResult result;
      if (spec.axis == SweepAxis::Temperature) {
        auto client = make_llm_client(config, "temperature sweep");
        TemperatureSweepInputs inputs{catalog.templates(dataset.dataset_id, CatalogMode::Single).front(),
                                      config.llm.generation, client.get(), generate_options(config, catalog)};
        result = sweep_temperature(spec, inputs, ctx);
      } else {
        if (abl_store.empty()) throw Error(ErrorCode::ConfigError, "count sweeps need --store");
        const auto store = load_prompt_store(abl_store);
        result = spec.axis == SweepAxis::LlmPromptCount ? sweep_llm_prompt_count(spec, store, ctx)
                                                        : sweep_image_prompt_count(spec, store, ctx);
      }
      emit(out, result.to_csv(), abl_out);
      return 0;
    }

    if (stats->parsed()) {
      const auto config = cat_flags.resolve();
      configure_logging(config.log_level, err);
      const auto catalog = load_catalog(config.catalog_dir);
      const CatalogMode modes[] = {CatalogMode::Standard, CatalogMode::Full, CatalogMode::Single};
      std::string csv = "dataset,standard,full,single\n";
      std::string text = fmt::format("{:<16}{:>10}{:>6}{:>8}\n", "dataset", "standard", "full", "single");
      for (const auto& id : catalog.dataset_ids()) {
        std::vector<std::string> cells;
        for (const auto mode : modes) {
          try {
            cells.push_back(std::to_string(catalog.templates(id, mode).size()));
          } catch (const Error& e) {
            if (e.code() != ErrorCode::UnknownMode) throw;
            cells.push_back("-");
          }
        }
        csv += id + "," + cells[0] + "," + cells[1] + "," + cells[2] + "\n";
        text += fmt::format("{:<16}{:>10}{:>6}{:>8}\n", id, cells[0], cells[1], cells[2]);
      }
      std::vector<TemplateCount> counts;
      for (const auto mode : modes) {
        counts.push_back(catalog.has_mode(mode) ? catalog.count_templates(mode) : TemplateCount{});
      }
      csv += fmt::format("total,{},{},{}\n", counts[0].total, counts[1].total, counts[2].total);
      csv += fmt::format("unique,{},{},{}\n", counts[0].unique, counts[1].unique, counts[2].unique);
      text += fmt::format("{:<16}{:>10}{:>6}{:>8}\n", "total", counts[0].total, counts[1].total, counts[2].total);
      text += fmt::format("{:<16}{:>10}{:>6}{:>8}\n", "unique", counts[0].unique, counts[1].unique, counts[2].unique);
      if (!cat_out.empty()) write_file_atomic(cat_out, csv);
      out << text;
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace cupl::cli
