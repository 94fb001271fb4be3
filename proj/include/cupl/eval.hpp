#pragma once

// Accuracy metrics, per-dataset metric selection and method-by-dataset report tables.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cupl/catalog.hpp"
#include "cupl/zeroshot.hpp"

namespace cupl {

struct ManifestItem {
  std::string image_key;
  std::size_t true_index = 0;
};

struct DatasetManifest {
  std::string dataset_id;
  std::vector<ManifestItem> items;

  /// Throws InvalidArgument on duplicate keys, DatasetMismatch on an index >= num_classes.
  void validate(std::size_t num_classes) const;
};

/// CSV with header `image_key,true_index`.
DatasetManifest load_manifest(const std::filesystem::path& path, std::string dataset_id = {});
std::string manifest_csv(const DatasetManifest& manifest);

/// Predictions CSV: `image_key,predicted_index,top_score`.
std::string predictions_csv(std::span<const Prediction> predictions);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

/// Percent correct over all manifest items.
double top1_accuracy(std::span<const Prediction> predictions, const DatasetManifest& manifest);

/// Per-class accuracy in percent; classes without test items are absent.
std::vector<std::optional<double>> per_class_accuracy(std::span<const Prediction> predictions,
                                                      const DatasetManifest& manifest, std::size_t num_classes);

/// Mean of per-class accuracies over classes that have test items.
double mean_per_class_accuracy(std::span<const Prediction> predictions, const DatasetManifest& manifest,
                               std::size_t num_classes);

struct EvalReport {
  std::string dataset_id;
  std::string mode;
  Metric metric_kind = Metric::Top1Accuracy;
  double metric_value = 0.0;
  std::vector<std::optional<double>> per_class_accuracy;
  std::size_t n_items = 0;
  std::optional<double> delta_vs_baseline;  // full precision
};

EvalReport evaluate(std::span<const Prediction> run, const std::string& mode, const DatasetManifest& manifest,
                    const DatasetSpec& dataset, const EvalReport* baseline = nullptr);

std::string report_json(const EvalReport& report);
EvalReport parse_report_json(const std::string& text);
void save_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);

struct RenderedTable {
  std::string text;
  std::string csv;
};

/// Methods as rows, datasets as columns (benchmark dataset order first), values
/// with two decimals and a signed delta row under every method that has one.
RenderedTable render_report_table(std::span<const EvalReport> reports);

/// Benchmark dataset ids in report column order.
const std::vector<std::string>& table_dataset_order();

}  // namespace cupl
