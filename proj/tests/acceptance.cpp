// Acceptance checks: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "cupl/ablation.hpp"
#include "cupl/catalog.hpp"
#include "cupl/error.hpp"
#include "cupl/eval.hpp"
#include "cupl/fixture_server.hpp"
#include "cupl/io.hpp"
#include "cupl/llm_gateway.hpp"
#include "cupl/prompt_factory.hpp"
#include "cupl/text.hpp"
#include "cupl/zeroshot.hpp"
#include "support.hpp"

using namespace cupl;
using cupl::fixture::CorpusClient;
using cupl::fixture::FixtureCorpus;
using cupl::fixture::FixtureServer;
using cupl::testing::slurp;
using cupl::testing::TempDir;
using Clock = std::chrono::steady_clock;

namespace {

// Collects the first few failed expectations of one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (failures_++ < 5) notes_ << (notes_.tellp() > 0 ? "; " : "") << what;
  }
  void note(const std::string& text) { info_ << (info_.tellp() > 0 ? ", " : "") << text; }
  bool ok() const { return failures_ == 0; }
  std::string detail() const {
    if (ok()) return info_.str();
    return std::to_string(failures_) + " failed: " + notes_.str();
  }

 private:
  std::size_t failures_ = 0;
  std::ostringstream notes_;
  std::ostringstream info_;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt2(double v) { return format_fixed(v, 2); }

std::vector<EmbeddingVector> random_vectors(std::mt19937_64& gen, std::size_t n, std::size_t dim) {
  std::normal_distribution<float> normal;
  std::vector<EmbeddingVector> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> v(dim);
    for (auto& x : v) x = normal(gen);
    out.emplace_back(std::move(v));
  }
  return out;
}

double max_abs_diff(const EmbeddingVector& a, const EmbeddingVector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) m = std::max(m, std::abs(double(a.components[i]) - b.components[i]));
  return m;
}

std::shared_ptr<const FixtureCorpus> corpus() {
  static const auto c =
      std::make_shared<const FixtureCorpus>(FixtureCorpus::load(cupl::testing::fixture_dir() / "llm_corpus.json"));
  return c;
}

void catalog_accounting(Check& c) {
  const auto start = Clock::now();
  const auto catalog = load_catalog(cupl::testing::shipped_catalog());
  const auto standard = catalog.count_templates(CatalogMode::Standard);
  const auto full = catalog.count_templates(CatalogMode::Full);
  const auto single = catalog.count_templates(CatalogMode::Single);
  c.expect(standard.total == 136 && standard.unique == 97,
           "standard " + std::to_string(standard.total) + "/" + std::to_string(standard.unique));
  c.expect(full.total == 33 && full.unique == 25, "full " + std::to_string(full.total) + "/" + std::to_string(full.unique));
  c.expect(single.total == 8 && single.unique == 1,
           "single " + std::to_string(single.total) + "/" + std::to_string(single.unique));

  struct Row {
    const char* id;
    std::size_t standard, full, single;
  };
  const Row rows[] = {{"imagenet", 80, 5, 1}, {"dtd", 8, 6, 1},       {"stanford_cars", 8, 9, 1},
                      {"sun397", 2, 3, 1},    {"food101", 1, 3, 1},   {"fgvc_aircraft", 2, 2, 1},
                      {"oxford_pets", 1, 2, 1}, {"caltech101", 34, 3, 1}};
  for (const auto& r : rows) {
    const auto s = catalog.templates(r.id, CatalogMode::Standard).size();
    const auto f = catalog.templates(r.id, CatalogMode::Full).size();
    const auto g = catalog.templates(r.id, CatalogMode::Single).size();
    c.expect(s == r.standard && f == r.full && g == r.single,
             std::string(r.id) + " " + std::to_string(s) + "/" + std::to_string(f) + "/" + std::to_string(g));
  }
  const double t = seconds_since(start);
  c.expect(t < 1.0, "took " + std::to_string(t) + " s");
  c.note("136/97, 33/25, 8/1 in " + format_fixed(t * 1000, 1) + " ms");
}

void prototype_properties(Check& c) {
  const auto start = Clock::now();
  std::mt19937_64 gen(20221012);
  std::uniform_int_distribution<std::size_t> count(1, 16);
  std::uniform_int_distribution<std::size_t> dims(2, 64);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  constexpr int kCases = 1000;
  for (int i = 0; i < kCases; ++i) {
    const auto v = random_vectors(gen, count(gen), dims(gen));
    const auto p = build_prototype(v);
    c.expect(std::abs(l2_norm(p.components) - 1.0) < 1e-6, "unit norm, case " + std::to_string(i));

    auto shuffled = v;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    c.expect(max_abs_diff(build_prototype(shuffled), p) < 1e-6, "permutation, case " + std::to_string(i));

    auto scaled = v;
    for (auto& x : scaled) {
      const double s = scale(gen);
      for (auto& comp : x.components) comp = static_cast<float>(comp * s);
    }
    c.expect(max_abs_diff(build_prototype(scaled), p) < 1e-6, "scale, case " + std::to_string(i));

    const auto n = normalize(p);
    c.expect(max_abs_diff(normalize(n), n) < 1e-6 && max_abs_diff(n, p) < 1e-6, "idempotence, case " + std::to_string(i));
  }
  const double t = seconds_since(start);
  c.expect(t < 5.0, "took " + std::to_string(t) + " s");
  c.note(std::to_string(kCases) + " cases in " + format_fixed(t, 2) + " s");
}

void classification_oracle(Check& c) {
  std::mt19937_64 gen(8);
  std::bernoulli_distribution tie(0.3);
  int ties = 0;
  for (int instance = 0; instance < 100; ++instance) {
    PrototypeSet protos;
    protos.dim = 8;
    for (std::size_t k = 0; k < 5; ++k) {
      protos.prototypes.push_back({k, "c" + std::to_string(k), normalize(random_vectors(gen, 1, 8).front()), 1});
    }
    if (tie(gen)) {
      // Duplicate a prototype so two classes score identically.
      const std::size_t hi = 1 + gen() % 4;
      const std::size_t lo = gen() % hi;
      protos.prototypes[hi].vector = protos.prototypes[lo].vector;
      ++ties;
    }
    const auto image = random_vectors(gen, 1, 8).front();
    const auto got = classify(image, protos);

    double norm = 0.0;
    for (float x : image.components) norm += double(x) * double(x);
    norm = std::sqrt(norm);
    std::size_t best = 0;
    double best_score = -2.0;
    for (std::size_t k = 0; k < 5; ++k) {
      double s = 0.0;
      for (std::size_t d = 0; d < 8; ++d) s += double(image.components[d]) * double(protos.prototypes[k].vector.components[d]);
      s /= norm;
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    c.expect(got.predicted_index == best && got.top_score() == best_score, "instance " + std::to_string(instance));
  }
  c.expect(ties > 0, "no tie instances generated");
  c.note("100 instances, " + std::to_string(ties) + " with ties");
}

void ensemble_identity(Check& c) {
  HashEmbedder embedder(64, 0);
  const auto a = load_prompt_store(cupl::testing::fixture_dir() / "golden" / "imagenet_mini_full.json");
  const auto b = load_prompt_store(cupl::testing::fixture_dir() / "golden" / "imagenet_mini_standard.json");
  const auto ensemble = ensemble_prototype_sets(a, b, embedder);
  const auto direct = build_prototype_set(concat_prompt_sets(a, b), embedder);
  c.expect(ensemble.size() == direct.size() && ensemble.size() == 5, "class count");
  for (std::size_t k = 0; k < std::min(ensemble.size(), direct.size()); ++k) {
    c.expect(ensemble.prototypes[k].vector == direct.prototypes[k].vector, "bit mismatch in class " + std::to_string(k));
  }

  // 50 CuPL sentences against 4 standard ones per class: averaging the two
  // prototypes weights the sets equally, the union does not.
  const auto pa = build_prototype_set(a, embedder);
  const auto pb = build_prototype_set(b, embedder);
  double min_gap = 1.0;
  for (std::size_t k = 0; k < ensemble.size(); ++k) {
    const std::vector<EmbeddingVector> pair{pa.prototypes[k].vector, pb.prototypes[k].vector};
    min_gap = std::min(min_gap, max_abs_diff(build_prototype(pair), ensemble.prototypes[k].vector));
  }
  c.expect(min_gap > 1e-3, "mean-of-prototypes matched the union (gap " + std::to_string(min_gap) + ")");
  c.note("bit-identical; mean-of-prototypes differs by >= " + format_fixed(min_gap, 4));
}

void metric_suite(Check& c) {
  DatasetManifest m{"d", {}};
  std::vector<Prediction> p;
  auto add = [&](const std::string& key, std::size_t truth, std::size_t guess) {
    m.items.push_back({key, truth});
    Prediction pr;
    pr.image_key = key;
    pr.predicted_index = guess;
    p.push_back(pr);
  };
  for (int i = 0; i < 10; ++i) add("a" + std::to_string(i), 0, 0);
  for (int i = 0; i < 2; ++i) add("b" + std::to_string(i), 1, 0);
  const double top1 = top1_accuracy(p, m);
  const double mpc = mean_per_class_accuracy(p, m, 2);
  c.expect(std::abs(top1 - 250.0 / 3.0) < 1e-6, "top-1 " + std::to_string(top1));
  c.expect(std::abs(mpc - 50.0) < 1e-6, "mean per class " + std::to_string(mpc));

  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 100; ++trial) {
    m.items.clear();
    p.clear();
    for (std::size_t k = 0; k < 4; ++k) {
      for (int j = 0; j < 5; ++j) add(std::to_string(k) + "_" + std::to_string(j), k, gen() % 4);
    }
    c.expect(std::abs(top1_accuracy(p, m) - mean_per_class_accuracy(p, m, 4)) < 1e-9, "balanced trial " + std::to_string(trial));
  }

  const auto catalog = load_catalog(cupl::testing::shipped_catalog());
  const std::pair<const char*, Metric> assignment[] = {
      {"imagenet", Metric::Top1Accuracy},      {"dtd", Metric::Top1Accuracy},
      {"stanford_cars", Metric::Top1Accuracy}, {"sun397", Metric::Top1Accuracy},
      {"food101", Metric::Top1Accuracy},       {"fgvc_aircraft", Metric::MeanPerClass},
      {"oxford_pets", Metric::MeanPerClass},   {"caltech101", Metric::MeanPerClass}};
  for (const auto& [id, metric] : assignment) {
    c.expect(catalog.dataset(id).metric == metric, std::string(id) + " uses " + std::string(to_string(catalog.dataset(id).metric)));
  }
  c.note("83.33 vs 50.00, 100 balanced trials, 8 metric assignments");
}

void cleaning_suite(Check& c) {
  std::mt19937_64 gen(5);
  const std::string alphabet = "ab .\n\r\t,!?xyz \xc3\xa9";
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::uniform_int_distribution<std::size_t> length(0, 40);
  constexpr int kFuzz = 10000;
  for (int i = 0; i < kFuzz; ++i) {
    std::string raw;
    const auto n = length(gen);
    for (std::size_t j = 0; j < n; ++j) raw += alphabet[pick(gen)];
    const auto cleaned = clean_completion(raw);
    const bool blank = raw.find_first_not_of(" \t\r\n") == std::string::npos;
    if (!cleaned) {
      c.expect(blank, "dropped a non-blank completion");
      continue;
    }
    c.expect(!cleaned->empty() && cleaned->back() == '.', "not period-terminated");
    c.expect(cleaned->find('\n') == std::string::npos && cleaned->find('\r') == std::string::npos, "line break survived");
  }

  FixtureServer::Options options;
  options.api_key = "acceptance";
  FixtureServer server(FixtureCorpus::load(cupl::testing::fixture_dir() / "llm_corpus.json"), options);
  HttpCompletionClient client(LlmEndpoint{server.base_url() + "/v1", "acceptance"}, 4);
  const auto catalog = load_catalog(cupl::testing::fixture_catalog());
  const auto set = generate_prompt_set(catalog.dataset("tench"), catalog.templates("tench", CatalogMode::Full), {},
                                       client);
  TempDir dir;
  save_prompt_store(set, dir / "tench_full.json");
  c.expect(set.total_sentences() == 50, std::to_string(set.total_sentences()) + " sentences");
  c.expect(server.completion_hits() == 5, std::to_string(server.completion_hits()) + " requests");
  c.expect(slurp(dir / "tench_full.json") == slurp(cupl::testing::fixture_dir() / "golden" / "tench_full.json"),
           "tench store differs from golden");
  c.note(std::to_string(kFuzz) + " fuzz strings; tench store byte-identical over HTTP");
}

struct PipelineOutputs {
  std::vector<std::string> files;
};

void end_to_end(Check& c) {
  const auto start = Clock::now();
  FixtureServer::Options options;
  options.api_key = "acceptance";
  FixtureServer server(FixtureCorpus::load(cupl::testing::fixture_dir() / "llm_corpus.json"), options);
  TempDir dir;
  const auto fixtures = cupl::testing::fixture_dir();
  const std::vector<std::string> env{"CUPL_API_KEY=acceptance", "CUPL_CACHE_DIR=" + (dir / "cache").string(),
                                     "-CUPL_CONFIG", "-CUPL_LLM_URL", "-CUPL_CATALOG_DIR"};

  auto run_once = [&](const std::string& tag) {
    const auto out = dir / tag;
    std::filesystem::create_directories(out);
    auto cli = [&](std::vector<std::string> args) {
      const auto r = cupl::testing::run_process(cupl::testing::cli_path(), args, env);
      c.expect(r.exit_code == 0, tag + ": " + args.front() + " exited " + std::to_string(r.exit_code) + " " + r.err);
    };
    const std::vector<std::string> dataset{"--dataset", "imagenet_mini", "--catalog", (fixtures / "catalog").string()};
    for (const std::string mode : {"full", "standard"}) {
      auto gen = dataset;
      gen.insert(gen.begin(), "generate");
      gen.insert(gen.end(), {"--mode", mode, "--out", out.string(), "--llm-url", server.base_url() + "/v1"});
      cli(gen);
      cli({"classify", "--store", (out / ("imagenet_mini_" + mode + ".json")).string(), "--images",
           (fixtures / "images.jsonl").string(), "--manifest", (fixtures / "manifest.csv").string(), "--out",
           (out / (mode + "_predictions.csv")).string()});
    }
    auto base = dataset;
    base.insert(base.begin(), "eval");
    base.insert(base.end(), {"--predictions", (out / "standard_predictions.csv").string(), "--manifest",
                             (fixtures / "manifest.csv").string(), "--mode", "standard", "--report-out",
                             (out / "standard.report.json").string()});
    cli(base);
    auto full = dataset;
    full.insert(full.begin(), "eval");
    full.insert(full.end(), {"--predictions", (out / "full_predictions.csv").string(), "--manifest",
                             (fixtures / "manifest.csv").string(), "--mode", "full", "--baseline",
                             (out / "standard.report.json").string(), "--report-out",
                             (out / "full.report.json").string(), "--out", (out / "table.csv").string()});
    cli(full);
    PipelineOutputs outputs;
    for (const std::string name : {"imagenet_mini_full.json", "imagenet_mini_full.meta.json",
                                   "imagenet_mini_standard.json", "full_predictions.csv", "standard_predictions.csv",
                                   "standard.report.json", "full.report.json", "table.csv"}) {
      outputs.files.push_back(std::filesystem::exists(out / name) ? slurp(out / name) : std::string("<missing>"));
    }
    return outputs;
  };

  run_once("cold");
  const auto cold_hits = server.completion_hits();
  const auto warm1 = run_once("warm1");
  const auto warm2 = run_once("warm2");
  c.expect(cold_hits == 25, "cold run made " + std::to_string(cold_hits) + " requests");
  c.expect(server.completion_hits() == cold_hits, "warm runs reached the server");
  c.expect(warm1.files == warm2.files, "warm runs differ");
  c.expect(warm1.files.back() == slurp(cupl::testing::fixture_dir() / "golden" / "imagenet_mini_table.csv"),
           "table differs from golden");
  const double t = seconds_since(start);
  c.expect(t < 10.0, "took " + std::to_string(t) + " s");
  c.note("8 outputs byte-identical across warm runs in " + format_fixed(t, 2) + " s");
}

void sweep_sanity(Check& c) {
  const auto catalog = load_catalog(cupl::testing::fixture_catalog());
  const auto& dataset = catalog.dataset("imagenet_mini");
  CorpusClient client(corpus());
  const auto store = generate_prompt_set(dataset, catalog.templates("imagenet_mini", CatalogMode::Full), {}, client);
  const auto images = load_embedding_file(cupl::testing::fixture_dir() / "images.jsonl");
  const auto manifest = load_manifest(cupl::testing::fixture_dir() / "manifest.csv", "imagenet_mini");
  HashEmbedder embedder(64, 0);
  const EvalContext ctx{&dataset, &manifest, &images, &embedder, {}};
  const auto full = run_pipeline(store, ctx);
  const auto sweep = sweep_image_prompt_count(SweepSpec{SweepAxis::ImagePromptsPerTemplate, {1, 2, 5, 10}}, store, ctx);
  c.expect(sweep.points.size() == 4, "point count");
  if (sweep.points.empty()) return;
  const auto& last = sweep.points.back();
  c.expect(last.metric == full.report.metric_value,
           "sweep max " + std::to_string(last.metric) + " vs full " + std::to_string(full.report.metric_value));
  c.expect(last.total_image_prompts == 50, "total " + std::to_string(last.total_image_prompts));
  c.note("m=10 gives " + fmt2(last.metric) + " = full run, total 50");
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria{
      {"catalog-accounting", catalog_accounting},
      {"prototype-properties", prototype_properties},
      {"classification-oracle", classification_oracle},
      {"ensemble-identity", ensemble_identity},
      {"metric-suite", metric_suite},
      {"cleaning-suite", cleaning_suite},
      {"end-to-end-determinism", end_to_end},
      {"sweep-sanity", sweep_sanity},
  };
  int failed = 0;
  for (const auto& [name, body] : criteria) {
    Check check;
    try {
      body(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    std::cout << (check.ok() ? "PASS " : "FAIL ") << name << ": " << check.detail() << std::endl;
    if (!check.ok()) ++failed;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
