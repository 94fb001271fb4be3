#pragma once

// Template catalogs, dataset registry and template rendering.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cupl {

enum class Metric { Top1Accuracy, MeanPerClass };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view text);

struct DatasetSpec {
  std::string dataset_id;
  std::string display_name;
  std::optional<std::string> type_hint;  // absent for general datasets
  Metric metric = Metric::Top1Accuracy;
  std::vector<std::string> class_labels;

  std::size_t num_classes() const { return class_labels.size(); }
  /// Position of `label` in class_labels, if present.
  std::optional<std::size_t> index_of(std::string_view label) const;
};

enum class ArticleMode { Verbatim, ExpandAn };

enum class TemplateSource { CuplFull, CuplSingle, Standard, WordNet };

std::string_view to_string(TemplateSource source);

struct LlmPromptTemplate {
  std::string text;
  ArticleMode article_mode = ArticleMode::ExpandAn;
  TemplateSource source = TemplateSource::CuplFull;

  bool has_type_slot() const;
};

/// Modes for which the catalog ships template files.
enum class CatalogMode { Single, Full, Standard };

std::string_view to_string(CatalogMode mode);
CatalogMode parse_catalog_mode(std::string_view text);

/// What to do with a ", a type of _," slot when no type hint is given.
enum class SlotPolicy {
  Require,           // MissingTypeHint
  RemoveWhenAbsent,  // drop the clause, used for general datasets
};

/// Per-word article overrides ("a" / "an"), keyed by lower-case word or label.
using ArticleOverrides = std::map<std::string, std::string>;

/// "a" or "an" for `label` by its first letter, unless overridden.
std::string indefinite_article(std::string_view label, const ArticleOverrides& overrides = {});

std::string render_template(const LlmPromptTemplate& tmpl, std::string_view class_label,
                            const std::optional<std::string>& type_hint,
                            SlotPolicy slot_policy = SlotPolicy::Require,
                            const ArticleOverrides& overrides = {});

struct TemplateCount {
  std::size_t total = 0;
  std::size_t unique = 0;
};

class TemplateCatalog {
 public:
  /// Loads `<dir>/datasets.json`, the per-dataset template files and labels.
  static TemplateCatalog load(const std::filesystem::path& data_dir);

  const DatasetSpec& dataset(std::string_view dataset_id) const;
  bool has_dataset(std::string_view dataset_id) const;
  /// Dataset ids in registry order.
  const std::vector<std::string>& dataset_ids() const { return order_; }

  const std::vector<LlmPromptTemplate>& templates(std::string_view dataset_id,
                                                  CatalogMode mode) const;
  bool has_mode(CatalogMode mode) const;

  TemplateCount count_templates(CatalogMode mode) const;

  const ArticleOverrides& article_overrides() const { return overrides_; }

  /// Renders a template for one class of a dataset, using its type hint or
  /// dropping the type clause for general datasets.
  std::string render(const LlmPromptTemplate& tmpl, const DatasetSpec& dataset,
                     std::string_view class_label) const;

  void add_dataset(DatasetSpec spec, std::map<CatalogMode, std::vector<LlmPromptTemplate>> templates);

 private:
  struct Entry {
    DatasetSpec spec;
    std::map<CatalogMode, std::vector<LlmPromptTemplate>> templates;
  };
  std::map<std::string, Entry, std::less<>> entries_;
  std::vector<std::string> order_;
  ArticleOverrides overrides_;
};

inline TemplateCatalog load_catalog(const std::filesystem::path& data_dir) {
  return TemplateCatalog::load(data_dir);
}

inline TemplateCount count_templates(const TemplateCatalog& catalog, CatalogMode mode) {
  return catalog.count_templates(mode);
}

}  // namespace cupl
