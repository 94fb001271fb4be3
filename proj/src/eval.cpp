#include "cupl/eval.hpp"

#include <algorithm>
#include <charconv>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cupl/error.hpp"
#include "cupl/io.hpp"
#include "cupl/text.hpp"

namespace cupl {

namespace {

std::unordered_map<std::string, std::size_t> index_predictions(std::span<const Prediction> predictions) {
  std::unordered_map<std::string, std::size_t> by_key;
  for (const auto& p : predictions) {
    if (!by_key.emplace(p.image_key, p.predicted_index).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate prediction for '" + p.image_key + "'");
    }
  }
  return by_key;
}

std::size_t lookup(const std::unordered_map<std::string, std::size_t>& by_key, const std::string& key) {
  auto it = by_key.find(key);
  if (it == by_key.end()) throw Error(ErrorCode::MissingPrediction, "no prediction for image '" + key + "'");
  return it->second;
}

struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

std::vector<CsvRow> read_csv_records(const std::filesystem::path& path,
                                                       const std::vector<std::string>& header) {
  const auto text = read_file(path);
  std::vector<CsvRow> rows;
  std::size_t line_no = 0;
  bool seen_header = false;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = parse_csv_line(line);
    if (!seen_header) {
      for (auto& f : fields) f = std::string(trim(f));
      if (fields.size() < header.size() || !std::equal(header.begin(), header.end(), fields.begin())) {
        throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": expected header " +
                                               [&] {
                                                 std::string h;
                                                 for (const auto& x : header) h += (h.empty() ? "" : ",") + x;
                                                 return h;
                                               }());
      }
      seen_header = true;
      continue;
    }
    if (fields.size() < header.size()) {
      throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                             std::to_string(header.size()) + " fields");
    }
    rows.push_back({line_no, std::move(fields)});
  }
  if (!seen_header) throw Error(ErrorCode::ParseError, path.string() + ": missing CSV header");
  return rows;
}

std::size_t parse_index(const std::string& field, const std::filesystem::path& path, std::size_t line) {
  const auto t = trim(field);
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line) + ": bad class index '" + field + "'");
  }
  return value;
}

int method_rank(const std::string& mode) {
  static const std::vector<std::string> order = {"standard", "single", "full", "ensemble", "wordnet"};
  auto it = std::find(order.begin(), order.end(), mode);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

}  // namespace

void DatasetManifest::validate(std::size_t num_classes) const {
  std::unordered_set<std::string> keys;
  for (const auto& item : items) {
    if (!keys.insert(item.image_key).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate image key '" + item.image_key + "' in manifest");
    }
    if (item.true_index >= num_classes) {
      throw Error(ErrorCode::DatasetMismatch, "image '" + item.image_key + "' has class index " +
                                                  std::to_string(item.true_index) + " but the dataset has " +
                                                  std::to_string(num_classes) + " classes");
    }
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path, std::string dataset_id) {
  DatasetManifest manifest;
  manifest.dataset_id = std::move(dataset_id);
  for (auto& row : read_csv_records(path, {"image_key", "true_index"})) {
    manifest.items.push_back({std::move(row.fields[0]), parse_index(row.fields[1], path, row.line)});
  }
  return manifest;
}

std::string manifest_csv(const DatasetManifest& manifest) {
  std::string out = "image_key,true_index\n";
  for (const auto& item : manifest.items) {
    out += csv_field(item.image_key) + "," + std::to_string(item.true_index) + "\n";
  }
  return out;
}

std::string predictions_csv(std::span<const Prediction> predictions) {
  std::string out = "image_key,predicted_index,top_score\n";
  for (const auto& p : predictions) {
    out += csv_field(p.image_key) + "," + std::to_string(p.predicted_index) + "," + format_fixed(p.top_score(), 6) + "\n";
  }
  return out;
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::vector<Prediction> out;
  for (auto& row : read_csv_records(path, {"image_key", "predicted_index"})) {
    Prediction p;
    p.image_key = std::move(row.fields[0]);
    p.predicted_index = parse_index(row.fields[1], path, row.line);
    out.push_back(std::move(p));
  }
  return out;
}

double top1_accuracy(std::span<const Prediction> predictions, const DatasetManifest& manifest) {
  if (manifest.items.empty()) throw Error(ErrorCode::EmptyManifest, "manifest has no items");
  const auto by_key = index_predictions(predictions);
  std::size_t correct = 0;
  for (const auto& item : manifest.items) {
    if (lookup(by_key, item.image_key) == item.true_index) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(manifest.items.size());
}

std::vector<std::optional<double>> per_class_accuracy(std::span<const Prediction> predictions,
                                                      const DatasetManifest& manifest, std::size_t num_classes) {
  if (manifest.items.empty()) throw Error(ErrorCode::EmptyManifest, "manifest has no items");
  const auto by_key = index_predictions(predictions);
  std::vector<std::size_t> correct(num_classes, 0);
  std::vector<std::size_t> total(num_classes, 0);
  for (const auto& item : manifest.items) {
    if (item.true_index >= num_classes) {
      throw Error(ErrorCode::DatasetMismatch, "class index " + std::to_string(item.true_index) + " out of range");
    }
    ++total[item.true_index];
    if (lookup(by_key, item.image_key) == item.true_index) ++correct[item.true_index];
  }
  std::vector<std::optional<double>> out(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (total[c] > 0) out[c] = 100.0 * static_cast<double>(correct[c]) / static_cast<double>(total[c]);
  }
  return out;
}

double mean_per_class_accuracy(std::span<const Prediction> predictions, const DatasetManifest& manifest,
                               std::size_t num_classes) {
  const auto per_class = per_class_accuracy(predictions, manifest, num_classes);
  double sum = 0.0;
  std::size_t present = 0;
  for (const auto& acc : per_class) {
    if (!acc) continue;
    sum += *acc;
    ++present;
  }
  return sum / static_cast<double>(present);
}

EvalReport evaluate(std::span<const Prediction> run, const std::string& mode, const DatasetManifest& manifest,
                    const DatasetSpec& dataset, const EvalReport* baseline) {
  if (!manifest.dataset_id.empty() && manifest.dataset_id != dataset.dataset_id) {
    throw Error(ErrorCode::DatasetMismatch, "manifest is for '" + manifest.dataset_id + "', dataset is '" +
                                                dataset.dataset_id + "'");
  }
  manifest.validate(dataset.num_classes());

  EvalReport report;
  report.dataset_id = dataset.dataset_id;
  report.mode = mode;
  report.metric_kind = dataset.metric;
  report.n_items = manifest.items.size();
  report.per_class_accuracy = per_class_accuracy(run, manifest, dataset.num_classes());
  report.metric_value = dataset.metric == Metric::Top1Accuracy
                            ? top1_accuracy(run, manifest)
                            : mean_per_class_accuracy(run, manifest, dataset.num_classes());
  if (baseline) {
    if (baseline->dataset_id != report.dataset_id || baseline->metric_kind != report.metric_kind) {
      throw Error(ErrorCode::DatasetMismatch, "baseline is a " + std::string(to_string(baseline->metric_kind)) +
                                                  " report for '" + baseline->dataset_id + "'");
    }
    report.delta_vs_baseline = report.metric_value - baseline->metric_value;
  }
  return report;
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["dataset_id"] = report.dataset_id;
  j["mode"] = report.mode;
  j["metric"] = to_string(report.metric_kind);
  j["metric_value"] = report.metric_value;
  j["n_items"] = report.n_items;
  j["delta_vs_baseline"] = report.delta_vs_baseline ? nlohmann::ordered_json(*report.delta_vs_baseline)
                                                    : nlohmann::ordered_json(nullptr);
  auto per_class = nlohmann::ordered_json::array();
  for (const auto& acc : report.per_class_accuracy) {
    per_class.push_back(acc ? nlohmann::ordered_json(*acc) : nlohmann::ordered_json(nullptr));
  }
  j["per_class_accuracy"] = std::move(per_class);
  return j.dump(2) + "\n";
}

EvalReport parse_report_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EvalReport r;
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.metric_kind = parse_metric(j.at("metric").get<std::string>());
    r.metric_value = j.at("metric_value").get<double>();
    r.n_items = j.value("n_items", std::size_t{0});
    if (j.contains("delta_vs_baseline") && !j.at("delta_vs_baseline").is_null()) {
      r.delta_vs_baseline = j.at("delta_vs_baseline").get<double>();
    }
    if (j.contains("per_class_accuracy")) {
      for (const auto& acc : j.at("per_class_accuracy")) {
        r.per_class_accuracy.push_back(acc.is_null() ? std::nullopt : std::optional<double>(acc.get<double>()));
      }
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad report: ") + e.what());
  }
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
  write_file_atomic(path, report_json(report));
}

EvalReport load_report(const std::filesystem::path& path) {
  try {
    return parse_report_json(read_file(path));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ParseError) throw;
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

const std::vector<std::string>& table_dataset_order() {
  static const std::vector<std::string> order = {"imagenet",      "dtd",         "stanford_cars", "sun397",
                                                 "food101",       "fgvc_aircraft", "oxford_pets", "caltech101"};
  return order;
}

RenderedTable render_report_table(std::span<const EvalReport> reports) {
  std::vector<std::string> datasets;
  std::vector<std::string> methods;
  for (const auto& id : table_dataset_order()) {
    if (std::any_of(reports.begin(), reports.end(), [&](const auto& r) { return r.dataset_id == id; })) {
      datasets.push_back(id);
    }
  }
  for (const auto& r : reports) {
    if (std::find(datasets.begin(), datasets.end(), r.dataset_id) == datasets.end()) datasets.push_back(r.dataset_id);
    if (std::find(methods.begin(), methods.end(), r.mode) == methods.end()) methods.push_back(r.mode);
  }
  std::stable_sort(methods.begin(), methods.end(),
                   [](const auto& a, const auto& b) { return method_rank(a) < method_rank(b); });

  auto find = [&](const std::string& method, const std::string& dataset) -> const EvalReport* {
    for (const auto& r : reports) {
      if (r.mode == method && r.dataset_id == dataset) return &r;
    }
    return nullptr;
  };

  std::vector<std::vector<std::string>> rows;
  rows.push_back({"method"});
  for (const auto& d : datasets) rows.back().push_back(d);
  for (const auto& m : methods) {
    std::vector<std::string> values{m};
    std::vector<std::string> deltas{m + " delta"};
    bool any_delta = false;
    for (const auto& d : datasets) {
      const auto* r = find(m, d);
      values.push_back(r ? format_fixed(r->metric_value, 2) : "");
      if (r && r->delta_vs_baseline) {
        any_delta = true;
        deltas.push_back(format_signed(*r->delta_vs_baseline, 2));
      } else {
        deltas.push_back("");
      }
    }
    rows.push_back(std::move(values));
    if (any_delta) rows.push_back(std::move(deltas));
  }

  RenderedTable table;
  std::vector<std::size_t> widths(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  }
  for (const auto& row : rows) {
    std::string csv_line;
    std::string text_line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      csv_line += (i ? "," : "") + csv_field(row[i]);
      if (i == 0) {
        text_line += row[i] + std::string(widths[i] - row[i].size(), ' ');
      } else {
        text_line += "  " + std::string(widths[i] - row[i].size(), ' ') + row[i];
      }
    }
    table.csv += csv_line + "\n";
    while (!text_line.empty() && text_line.back() == ' ') text_line.pop_back();
    table.text += text_line + "\n";
  }
  return table;
}

}  // namespace cupl
