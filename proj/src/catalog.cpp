#include "cupl/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "cupl/error.hpp"
#include "cupl/text.hpp"

namespace cupl {

namespace {

constexpr std::string_view kPlaceholder = "{}";
constexpr std::string_view kTypeSlot = "a type of _";
constexpr std::string_view kArticleMarker = "a(n)";
constexpr std::string_view kArticleMarkerUpper = "A(n)";

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string remove_type_slot(std::string text) {
  // ", a type of _," is the shipped form; fall back to bare removal otherwise.
  for (std::string_view form : {", a type of _,", ", a type of _", " a type of _", "a type of _"}) {
    text = replace_all(text, form, "");
  }
  while (text.find("  ") != std::string::npos) text = replace_all(text, "  ", " ");
  return text;
}

std::string read_file_lines_error(const std::filesystem::path& file, std::size_t line,
                                  const std::string& what) {
  return file.string() + ":" + std::to_string(line) + ": " + what;
}

std::vector<LlmPromptTemplate> load_template_file(const std::filesystem::path& file,
                                                  TemplateSource source) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + file.string());
  std::vector<LlmPromptTemplate> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view trimmed = trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    if (count_occurrences(trimmed, kPlaceholder) != 1) {
      throw Error(ErrorCode::CatalogParseError,
                  read_file_lines_error(file, line_no, "template must contain exactly one {}"));
    }
    LlmPromptTemplate t;
    t.text = std::string(trimmed);
    t.source = source;
    t.article_mode = source == TemplateSource::Standard ? ArticleMode::Verbatim : ArticleMode::ExpandAn;
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<std::string> load_labels(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + file.string());
  std::vector<std::string> labels;
  std::set<std::string, std::less<>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view label = trim(line);
    if (label.empty()) continue;
    if (!seen.emplace(label).second) {
      throw Error(ErrorCode::CatalogParseError,
                  read_file_lines_error(file, line_no, "duplicate label '" + std::string(label) + "'"));
    }
    labels.emplace_back(label);
  }
  if (labels.empty()) {
    throw Error(ErrorCode::CatalogParseError, file.string() + ": no class labels");
  }
  return labels;
}

}  // namespace

std::string_view to_string(Metric metric) {
  return metric == Metric::Top1Accuracy ? "top1" : "mean_per_class";
}

Metric parse_metric(std::string_view text) {
  if (text == "top1" || text == "acc") return Metric::Top1Accuracy;
  if (text == "mean_per_class" || text == "mean") return Metric::MeanPerClass;
  throw Error(ErrorCode::InvalidArgument, "unknown metric '" + std::string(text) + "'");
}

std::optional<std::size_t> DatasetSpec::index_of(std::string_view label) const {
  auto it = std::find(class_labels.begin(), class_labels.end(), label);
  if (it == class_labels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - class_labels.begin());
}

std::string_view to_string(TemplateSource source) {
  switch (source) {
    case TemplateSource::CuplFull: return "full";
    case TemplateSource::CuplSingle: return "single";
    case TemplateSource::Standard: return "standard";
    case TemplateSource::WordNet: return "wordnet";
  }
  return "?";
}

bool LlmPromptTemplate::has_type_slot() const {
  return text.find(kTypeSlot) != std::string::npos;
}

std::string_view to_string(CatalogMode mode) {
  switch (mode) {
    case CatalogMode::Single: return "single";
    case CatalogMode::Full: return "full";
    case CatalogMode::Standard: return "standard";
  }
  return "?";
}

CatalogMode parse_catalog_mode(std::string_view text) {
  if (text == "single") return CatalogMode::Single;
  if (text == "full") return CatalogMode::Full;
  if (text == "standard") return CatalogMode::Standard;
  throw Error(ErrorCode::UnknownMode, "unknown catalog mode '" + std::string(text) + "'");
}

std::string indefinite_article(std::string_view label, const ArticleOverrides& overrides) {
  const std::string lowered = lower_ascii(trim(label));
  if (auto it = overrides.find(lowered); it != overrides.end()) return it->second;
  const std::string first_word = lowered.substr(0, lowered.find(' '));
  if (auto it = overrides.find(first_word); it != overrides.end()) return it->second;
  if (lowered.empty()) return "a";
  switch (lowered.front()) {
    case 'a': case 'e': case 'i': case 'o': case 'u':
      return "an";
    default:
      return "a";
  }
}

std::string render_template(const LlmPromptTemplate& tmpl, std::string_view class_label,
                            const std::optional<std::string>& type_hint, SlotPolicy slot_policy,
                            const ArticleOverrides& overrides) {
  if (count_occurrences(tmpl.text, kPlaceholder) != 1) {
    throw Error(ErrorCode::MalformedTemplate, "'" + tmpl.text + "' must contain exactly one {}");
  }
  std::string out = tmpl.text;
  if (tmpl.has_type_slot()) {
    if (type_hint) {
      out = replace_all(out, kTypeSlot, "a type of " + *type_hint);
    } else if (slot_policy == SlotPolicy::RemoveWhenAbsent) {
      out = remove_type_slot(std::move(out));
    } else {
      throw Error(ErrorCode::MissingTypeHint, "'" + tmpl.text + "' needs a type hint");
    }
  }
  if (tmpl.article_mode == ArticleMode::ExpandAn) {
    const std::string article = indefinite_article(class_label, overrides);
    std::string capitalized = article;
    capitalized.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(capitalized.front())));
    out = replace_all(out, kArticleMarker, article);
    out = replace_all(out, kArticleMarkerUpper, capitalized);
  }
  // Substituted last so label text is never reinterpreted.
  const auto pos = out.find(kPlaceholder);
  out.replace(pos, kPlaceholder.size(), class_label);
  return out;
}

TemplateCatalog TemplateCatalog::load(const std::filesystem::path& data_dir) {
  const auto registry_path = data_dir / "datasets.json";
  std::ifstream in(registry_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + registry_path.string());

  nlohmann::json registry;
  try {
    registry = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::CatalogParseError, registry_path.string() + ": " + e.what());
  }

  TemplateCatalog catalog;
  const auto overrides_path = data_dir / "article_overrides.json";
  if (std::filesystem::exists(overrides_path)) {
    std::ifstream oin(overrides_path, std::ios::binary);
    try {
      for (const auto& [word, article] : nlohmann::json::parse(oin).items()) {
        catalog.overrides_[lower_ascii(word)] = article.get<std::string>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::CatalogParseError, overrides_path.string() + ": " + e.what());
    }
  }

  const nlohmann::json* entries = &registry;
  if (registry.is_object() && registry.contains("datasets")) entries = &registry.at("datasets");
  if (!entries->is_array()) {
    throw Error(ErrorCode::CatalogParseError, registry_path.string() + ": expected a list of datasets");
  }

  std::size_t index = 0;
  for (const auto& entry : *entries) {
    const std::string where = registry_path.string() + ": entry " + std::to_string(index++);
    DatasetSpec spec;
    std::string labels_file;
    try {
      spec.dataset_id = entry.at("dataset_id").get<std::string>();
      spec.display_name = entry.value("display_name", spec.dataset_id);
      if (entry.contains("type_hint") && !entry.at("type_hint").is_null()) {
        spec.type_hint = entry.at("type_hint").get<std::string>();
      }
      spec.metric = parse_metric(entry.at("metric").get<std::string>());
      labels_file = entry.at("labels_file").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::CatalogParseError, where + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::CatalogParseError, where + ": " + e.what());
    }
    spec.class_labels = load_labels(data_dir / labels_file);

    std::map<CatalogMode, std::vector<LlmPromptTemplate>> templates;
    const auto dir = data_dir / spec.dataset_id;
    const std::pair<CatalogMode, TemplateSource> files[] = {
        {CatalogMode::Single, TemplateSource::CuplSingle},
        {CatalogMode::Full, TemplateSource::CuplFull},
        {CatalogMode::Standard, TemplateSource::Standard},
    };
    for (const auto& [mode, source] : files) {
      const auto path = dir / (std::string(to_string(mode)) + ".txt");
      if (!std::filesystem::exists(path)) continue;
      auto list = load_template_file(path, source);
      if (mode == CatalogMode::Single && list.size() != 1) {
        throw Error(ErrorCode::CatalogParseError,
                    path.string() + ": single mode needs exactly one template, found " +
                        std::to_string(list.size()));
      }
      templates.emplace(mode, std::move(list));
    }
    catalog.add_dataset(std::move(spec), std::move(templates));
  }
  return catalog;
}

void TemplateCatalog::add_dataset(DatasetSpec spec,
                                  std::map<CatalogMode, std::vector<LlmPromptTemplate>> templates) {
  if (entries_.contains(spec.dataset_id)) {
    throw Error(ErrorCode::CatalogParseError, "duplicate dataset '" + spec.dataset_id + "'");
  }
  order_.push_back(spec.dataset_id);
  std::string id = spec.dataset_id;
  entries_.emplace(std::move(id), Entry{std::move(spec), std::move(templates)});
}

const DatasetSpec& TemplateCatalog::dataset(std::string_view dataset_id) const {
  auto it = entries_.find(dataset_id);
  if (it == entries_.end()) {
    throw Error(ErrorCode::UnknownDataset, "no dataset '" + std::string(dataset_id) + "' in catalog");
  }
  return it->second.spec;
}

bool TemplateCatalog::has_dataset(std::string_view dataset_id) const {
  return entries_.find(dataset_id) != entries_.end();
}

const std::vector<LlmPromptTemplate>& TemplateCatalog::templates(std::string_view dataset_id,
                                                                 CatalogMode mode) const {
  auto it = entries_.find(dataset_id);
  if (it == entries_.end()) {
    throw Error(ErrorCode::UnknownDataset, "no dataset '" + std::string(dataset_id) + "' in catalog");
  }
  auto mt = it->second.templates.find(mode);
  if (mt == it->second.templates.end()) {
    throw Error(ErrorCode::UnknownMode, "dataset '" + std::string(dataset_id) + "' has no " +
                                            std::string(to_string(mode)) + " templates");
  }
  return mt->second;
}

bool TemplateCatalog::has_mode(CatalogMode mode) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [mode](const auto& kv) { return kv.second.templates.contains(mode); });
}

TemplateCount TemplateCatalog::count_templates(CatalogMode mode) const {
  if (!has_mode(mode)) {
    throw Error(ErrorCode::UnknownMode, "catalog has no " + std::string(to_string(mode)) + " templates");
  }
  TemplateCount count;
  std::set<std::string, std::less<>> distinct;
  for (const auto& id : order_) {
    const auto& templates = entries_.find(id)->second.templates;
    auto it = templates.find(mode);
    if (it == templates.end()) continue;
    count.total += it->second.size();
    for (const auto& t : it->second) distinct.insert(t.text);
  }
  count.unique = distinct.size();
  return count;
}

std::string TemplateCatalog::render(const LlmPromptTemplate& tmpl, const DatasetSpec& dataset,
                                    std::string_view class_label) const {
  return render_template(tmpl, class_label, dataset.type_hint, SlotPolicy::RemoveWhenAbsent, overrides_);
}

}  // namespace cupl
