#include "cupl/prompt_factory.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cupl/io.hpp"
#include "cupl/text.hpp"

namespace cupl {

namespace {

using nlohmann::ordered_json;

ordered_json origins_json(const std::vector<PromptOrigin>& origins) {
  ordered_json out = ordered_json::array();
  for (const auto& o : origins) out.push_back({o.template_index, o.completion_index});
  return out;
}

std::vector<PromptOrigin> origins_from_json(const ordered_json& j) {
  std::vector<PromptOrigin> out;
  for (const auto& pair : j) {
    out.push_back({pair.at(0).get<std::size_t>(), pair.at(1).get<std::size_t>()});
  }
  return out;
}

ClassPrompts generate_class(const DatasetSpec& dataset, const std::string& label,
                            std::span<const LlmPromptTemplate> templates, const GenerationConfig& config,
                            CompletionClient& client, const GenerateOptions& options) {
  ClassPrompts out;
  out.label = label;
  for (std::size_t t = 0; t < templates.size(); ++t) {
    const auto prompt = render_template(templates[t], label, dataset.type_hint, SlotPolicy::RemoveWhenAbsent,
                                        options.article_overrides);
    const auto batch = options.cache_dir ? cached_complete(client, prompt, config, *options.cache_dir)
                                         : client.complete(prompt, config);
    for (std::size_t c = 0; c < batch.raw_texts.size(); ++c) {
      if (auto sentence = clean_completion(batch.raw_texts[c])) {
        out.sentences.push_back(std::move(*sentence));
        out.origins.push_back({t, c});
      } else {
        spdlog::info("dropping empty completion {} of template {} for '{}'", c, t, label);
        out.dropped.push_back({t, c});
      }
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(PromptMode mode) {
  switch (mode) {
    case PromptMode::CuplSingle: return "single";
    case PromptMode::CuplFull: return "full";
    case PromptMode::Standard: return "standard";
    case PromptMode::WordNet: return "wordnet";
    case PromptMode::Ensemble: return "ensemble";
  }
  return "?";
}

PromptMode parse_prompt_mode(std::string_view text) {
  if (text == "single") return PromptMode::CuplSingle;
  if (text == "full") return PromptMode::CuplFull;
  if (text == "standard") return PromptMode::Standard;
  if (text == "wordnet") return PromptMode::WordNet;
  if (text == "ensemble") return PromptMode::Ensemble;
  throw Error(ErrorCode::UnknownMode, "unknown prompt mode '" + std::string(text) + "'");
}

bool ImagePromptSet::has_provenance() const {
  return !classes.empty() && std::all_of(classes.begin(), classes.end(), [](const ClassPrompts& c) {
    return c.origins.size() == c.sentences.size();
  });
}

const ClassPrompts* ImagePromptSet::find(std::string_view label) const {
  auto it = std::find_if(classes.begin(), classes.end(), [&](const ClassPrompts& c) { return c.label == label; });
  return it == classes.end() ? nullptr : &*it;
}

std::vector<std::string> ImagePromptSet::labels() const {
  std::vector<std::string> out;
  out.reserve(classes.size());
  for (const auto& c : classes) out.push_back(c.label);
  return out;
}

std::size_t ImagePromptSet::total_sentences() const {
  std::size_t total = 0;
  for (const auto& c : classes) total += c.sentences.size();
  return total;
}

std::optional<std::string> clean_completion(std::string_view raw) {
  std::string joined;
  std::size_t start = 0;
  while (start <= raw.size()) {
    auto end = raw.find_first_of("\r\n", start);
    if (end == std::string_view::npos) end = raw.size();
    const auto line = trim(raw.substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    if (!joined.empty()) joined += ' ';
    joined += line;
  }
  if (joined.empty()) return std::nullopt;
  if (joined.back() != '.') joined += '.';
  return joined;
}

ImagePromptSet generate_prompt_set(const DatasetSpec& dataset, std::span<const LlmPromptTemplate> templates,
                                   const GenerationConfig& config, CompletionClient& client,
                                   const GenerateOptions& options) {
  if (templates.empty()) throw Error(ErrorCode::EmptyInput, "no LLM-prompt templates for " + dataset.dataset_id);
  config.validate();
  for (const auto& t : templates) {
    if (t.source == TemplateSource::Standard) {
      throw Error(ErrorCode::InvalidArgument, "standard templates are image-prompts, not LLM-prompts: '" + t.text + "'");
    }
  }

  ImagePromptSet set;
  set.dataset_id = dataset.dataset_id;
  set.mode = std::all_of(templates.begin(), templates.end(),
                         [](const auto& t) { return t.source == TemplateSource::CuplSingle; })
                 ? PromptMode::CuplSingle
                 : PromptMode::CuplFull;
  set.generation = config;
  set.template_count = templates.size();

  const auto& labels = dataset.class_labels;
  std::vector<std::optional<ClassPrompts>> results(labels.size());
  std::vector<std::optional<Error>> failures(labels.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < labels.size(); i = next++) {
      try {
        results[i] = generate_class(dataset, labels[i], templates, config, client, options);
      } catch (const Error& e) {
        failures[i] = e;
      } catch (const std::exception& e) {
        failures[i] = Error(ErrorCode::TransportError, e.what());
      }
    }
  };
  const auto workers = std::clamp<std::size_t>(options.parallelism, 1, std::max<std::size_t>(labels.size(), 1));
  std::vector<std::jthread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  pool.clear();

  std::size_t failed = 0;
  const Error* first = nullptr;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (failures[i]) {
      ++failed;
      if (!first) first = &*failures[i];
    } else {
      set.classes.push_back(std::move(*results[i]));
    }
  }
  if (first) {
    throw GenerationError(first->code(),
                          std::to_string(failed) + " of " + std::to_string(labels.size()) +
                              " classes failed; first failure: " + first->what(),
                          std::move(set));
  }
  return set;
}

ImagePromptSet standard_prompt_set(const DatasetSpec& dataset, std::span<const LlmPromptTemplate> templates) {
  if (templates.empty()) throw Error(ErrorCode::EmptyInput, "no standard templates for " + dataset.dataset_id);
  ImagePromptSet set;
  set.dataset_id = dataset.dataset_id;
  set.mode = PromptMode::Standard;
  set.template_count = templates.size();
  for (const auto& label : dataset.class_labels) {
    ClassPrompts cls;
    cls.label = label;
    for (std::size_t t = 0; t < templates.size(); ++t) {
      cls.sentences.push_back(render_template(templates[t], label, dataset.type_hint, SlotPolicy::RemoveWhenAbsent));
      cls.origins.push_back({t, 0});
    }
    set.classes.push_back(std::move(cls));
  }
  return set;
}

std::string wordnet_prompt(const WordNetDefinition& def, const ArticleOverrides& overrides) {
  std::string article = indefinite_article(def.class_label, overrides);
  article.front() = 'A';
  std::string_view body = trim(def.definition_text);
  while (!body.empty() && body.back() == '.') body = trim(body.substr(0, body.size() - 1));
  return article + " " + std::string(trim(def.class_label)) + " is " + std::string(body) + ".";
}

std::vector<WordNetDefinition> load_wordnet_definitions(const std::filesystem::path& path) {
  const auto text = read_file(path);
  std::vector<WordNetDefinition> defs;
  std::size_t line_no = 0;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto record = nlohmann::json::parse(line);
      WordNetDefinition def{record.at("label").get<std::string>(), record.at("definition").get<std::string>()};
      if (trim(def.definition_text).empty()) {
        throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": empty definition");
      }
      defs.push_back(std::move(def));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return defs;
}

ImagePromptSet wordnet_prompt_set(const DatasetSpec& dataset, std::span<const WordNetDefinition> defs,
                                  const ArticleOverrides& overrides) {
  ImagePromptSet set;
  set.dataset_id = dataset.dataset_id;
  set.mode = PromptMode::WordNet;
  set.template_count = 1;
  for (const auto& label : dataset.class_labels) {
    auto it = std::find_if(defs.begin(), defs.end(), [&](const auto& d) { return d.class_label == label; });
    if (it == defs.end()) throw Error(ErrorCode::MissingKey, "no WordNet definition for '" + label + "'");
    set.classes.push_back(ClassPrompts{label, {wordnet_prompt(*it, overrides)}, {{0, 0}}, {}});
  }
  return set;
}

std::filesystem::path meta_path_for(const std::filesystem::path& store_path) {
  auto meta = store_path;
  meta.replace_extension(".meta.json");
  return meta;
}

std::string prompt_store_json(const ImagePromptSet& set) {
  ordered_json j = ordered_json::object();
  for (const auto& cls : set.classes) j[cls.label] = cls.sentences;
  return j.dump(2, ' ', false, ordered_json::error_handler_t::replace) + "\n";
}

std::string prompt_store_meta_json(const ImagePromptSet& set) {
  ordered_json meta;
  meta["dataset_id"] = set.dataset_id;
  meta["mode"] = to_string(set.mode);
  meta["template_count"] = set.template_count;
  if (set.generation) {
    const auto& g = *set.generation;
    meta["config"] = {{"model", g.model},
                      {"temperature", g.temperature},
                      {"max_tokens", g.max_tokens},
                      {"completions_per_prompt", g.completions_per_prompt},
                      {"stop_sequence", g.stop_sequence}};
  } else {
    meta["config"] = nullptr;
  }
  ordered_json provenance = ordered_json::object();
  ordered_json dropped = ordered_json::object();
  for (const auto& cls : set.classes) {
    provenance[cls.label] = origins_json(cls.origins);
    if (!cls.dropped.empty()) dropped[cls.label] = origins_json(cls.dropped);
  }
  meta["provenance"] = std::move(provenance);
  meta["dropped"] = std::move(dropped);
  return meta.dump(2, ' ', false, ordered_json::error_handler_t::replace) + "\n";
}

void save_prompt_store(const ImagePromptSet& set, const std::filesystem::path& path) {
  write_file_atomic(path, prompt_store_json(set));
  write_file_atomic(meta_path_for(path), prompt_store_meta_json(set));
}

ImagePromptSet load_prompt_store(const std::filesystem::path& path) {
  ImagePromptSet set;
  try {
    const auto store = ordered_json::parse(read_file(path));
    if (!store.is_object()) throw Error(ErrorCode::ParseError, path.string() + ": expected an object of label -> sentences");
    for (const auto& [label, sentences] : store.items()) {
      set.classes.push_back(ClassPrompts{label, sentences.get<std::vector<std::string>>(), {}, {}});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }

  const auto meta_path = meta_path_for(path);
  if (!std::filesystem::exists(meta_path)) return set;
  try {
    const auto meta = ordered_json::parse(read_file(meta_path));
    set.dataset_id = meta.at("dataset_id").get<std::string>();
    set.mode = parse_prompt_mode(meta.at("mode").get<std::string>());
    set.template_count = meta.value("template_count", std::size_t{0});
    if (meta.contains("config") && !meta.at("config").is_null()) {
      const auto& c = meta.at("config");
      GenerationConfig g;
      g.model = c.at("model").get<std::string>();
      g.temperature = c.at("temperature").get<double>();
      g.max_tokens = c.at("max_tokens").get<int>();
      g.completions_per_prompt = c.at("completions_per_prompt").get<int>();
      g.stop_sequence = c.at("stop_sequence").get<std::string>();
      set.generation = g;
    }
    for (auto& cls : set.classes) {
      const auto& provenance = meta.at("provenance");
      if (provenance.contains(cls.label)) cls.origins = origins_from_json(provenance.at(cls.label));
      if (meta.contains("dropped") && meta.at("dropped").contains(cls.label)) {
        cls.dropped = origins_from_json(meta.at("dropped").at(cls.label));
      }
      if (!cls.origins.empty() && cls.origins.size() != cls.sentences.size()) {
        throw Error(ErrorCode::ParseError, meta_path.string() + ": provenance for '" + cls.label +
                                               "' does not match its sentence count");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, meta_path.string() + ": " + e.what());
  }
  return set;
}

}  // namespace cupl
