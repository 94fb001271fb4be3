#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "cupl/error.hpp"
#include "cupl/zeroshot.hpp"
#include "support.hpp"

using namespace cupl;
using cupl::testing::TempDir;

namespace {

template <typename F>
Error error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an error");
  return Error(ErrorCode::InvalidArgument, "unreachable");
}

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

class CountingEmbedder final : public TextEmbedder {
 public:
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
    requested += texts.size();
    return inner.embed(texts);
  }
  HashEmbedder inner{16, 0};
  std::size_t requested = 0;
};

ImagePromptSet prompt_set(std::vector<std::pair<std::string, std::vector<std::string>>> classes,
                          PromptMode mode = PromptMode::CuplFull) {
  ImagePromptSet set;
  set.dataset_id = "d";
  set.mode = mode;
  for (auto& [label, sentences] : classes) set.classes.push_back({label, sentences, {}, {}});
  return set;
}

double max_abs_diff(const EmbeddingVector& a, const EmbeddingVector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) m = std::max(m, std::abs(double(a.components[i]) - b.components[i]));
  return m;
}

}  // namespace

TEST_CASE("prototype of known vectors") {
  const std::vector<EmbeddingVector> v{EmbeddingVector({2, 0}), EmbeddingVector({0, 5})};
  const auto p = build_prototype(v);
  CHECK(p.components[0] == doctest::Approx(std::sqrt(0.5)));
  CHECK(p.components[1] == doctest::Approx(std::sqrt(0.5)));

  PrototypeOptions raw;
  raw.prenormalize = false;
  const auto q = build_prototype(v, raw);
  CHECK(q.components[0] == doctest::Approx(2.0 / std::sqrt(29.0)));
  CHECK(q.components[1] == doctest::Approx(5.0 / std::sqrt(29.0)));
}

TEST_CASE("prototype errors") {
  CHECK(error_of([] { build_prototype(std::vector<EmbeddingVector>{}); }).code() == ErrorCode::EmptyInput);
  CHECK(error_of([] {
          build_prototype(std::vector<EmbeddingVector>{EmbeddingVector({1, 0}), EmbeddingVector({1, 0, 0})});
        }).code() == ErrorCode::DimMismatch);
  CHECK(error_of([] {
          build_prototype(std::vector<EmbeddingVector>{EmbeddingVector({1, 2}), EmbeddingVector({-1, -2})});
        }).code() == ErrorCode::ZeroVector);
  CHECK(error_of([] { build_prototype(std::vector<EmbeddingVector>{EmbeddingVector({0, 0})}); }).code() ==
        ErrorCode::ZeroVector);
}

TEST_CASE("prototype properties over random inputs") {
  std::mt19937_64 gen(1234);
  std::uniform_int_distribution<std::size_t> count(1, 12);
  std::uniform_int_distribution<std::size_t> dims(2, 48);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int i = 0; i < 300; ++i) {
    auto v = random_vectors(gen, count(gen), dims(gen));
    const auto p = build_prototype(v);
    CHECK(std::abs(l2_norm(p.components) - 1.0) < 1e-6);

    auto shuffled = v;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    CHECK(max_abs_diff(build_prototype(shuffled), p) < 1e-6);

    auto scaled = v;
    for (auto& x : scaled) {
      const double s = scale(gen);
      for (auto& c : x.components) c = static_cast<float>(c * s);
    }
    CHECK(max_abs_diff(build_prototype(scaled), p) < 1e-6);

    CHECK(max_abs_diff(build_prototype(std::vector<EmbeddingVector>{p}), p) < 1e-6);
    CHECK(max_abs_diff(build_prototype(std::vector<EmbeddingVector>{p, p, p}), p) < 1e-6);
  }
}

TEST_CASE("prototype sets embed each distinct sentence once") {
  CountingEmbedder embedder;
  const auto set = prompt_set({{"a", {"x.", "y.", "x."}}, {"b", {"y.", "z."}}});
  const auto protos = build_prototype_set(set, embedder);
  CHECK(embedder.requested == 3);
  REQUIRE(protos.size() == 2);
  CHECK(protos.dim == 16);
  CHECK(protos.prototypes[0].class_label == "a");
  CHECK(protos.prototypes[0].source_count == 3);
  CHECK(protos.prototypes[1].class_index == 1);
  CHECK(protos.mode == "full");

  const auto empty = prompt_set({{"a", {"x."}}, {"b", {}}});
  CHECK(error_of([&] { build_prototype_set(empty, embedder); }).code() == ErrorCode::EmptyClass);
}

TEST_CASE("classification matches a brute-force oracle") {
  std::mt19937_64 gen(42);
  std::uniform_int_distribution<int> coin(0, 3);
  int ties = 0;
  for (int instance = 0; instance < 100; ++instance) {
    PrototypeSet protos;
    protos.dim = 8;
    for (std::size_t c = 0; c < 5; ++c) {
      auto raw = random_vectors(gen, 1, 8);
      protos.prototypes.push_back({c, "c" + std::to_string(c), normalize(raw.front()), 1});
    }
    if (coin(gen) == 0) {
      protos.prototypes[3].vector = protos.prototypes[1].vector;
      ++ties;
    }
    const auto image = random_vectors(gen, 1, 8).front();
    const auto p = classify(image, protos, "img");

    double norm = 0.0;
    for (float x : image.components) norm += double(x) * double(x);
    norm = std::sqrt(norm);
    std::size_t best = 0;
    double best_score = -2.0;
    for (std::size_t c = 0; c < 5; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < 8; ++k) s += double(image.components[k]) * double(protos.prototypes[c].vector.components[k]);
      s /= norm;
      if (s > best_score) {
        best_score = s;
        best = c;
      }
    }
    CHECK(p.predicted_index == best);
    CHECK(p.top_score() == best_score);
    CHECK(p.image_key == "img");
  }
  CHECK(ties > 10);
}

TEST_CASE("exact ties go to the lowest index") {
  PrototypeSet protos;
  protos.dim = 2;
  protos.prototypes = {{0, "a", EmbeddingVector({0, 1}), 1},
                       {1, "b", EmbeddingVector({1, 0}), 1},
                       {2, "c", EmbeddingVector({1, 0}), 1}};
  CHECK(classify(EmbeddingVector({1, 0}), protos).predicted_index == 1);
  protos.prototypes[0].vector = EmbeddingVector({1, 0});
  CHECK(classify(EmbeddingVector({1, 0}), protos).predicted_index == 0);
}

TEST_CASE("classification errors name the problem") {
  PrototypeSet protos;
  protos.dim = 2;
  protos.prototypes = {{0, "a", EmbeddingVector({0, 1}), 1}};
  const auto e = error_of([&] { classify(EmbeddingVector({1, 0, 0}), protos, "img_7"); });
  CHECK(e.code() == ErrorCode::DimMismatch);
  const std::string what = e.what();
  CHECK(what.find('3') != std::string::npos);
  CHECK(what.find('2') != std::string::npos);
  CHECK(what.find("img_7") != std::string::npos);
  CHECK(error_of([&] { classify(EmbeddingVector({0, 0}), protos); }).code() == ErrorCode::ZeroVector);
  CHECK(error_of([&] { classify(EmbeddingVector({0, 1}), PrototypeSet{}); }).code() == ErrorCode::EmptyInput);
}

TEST_CASE("ensembling is one prototype over the union of sentences") {
  HashEmbedder embedder(16, 3);
  const auto a = prompt_set({{"cat", {"A cat sits."}}, {"dog", {"A dog runs.", "A dog sleeps."}}});
  const auto b = prompt_set({{"cat", {"a photo of a cat.", "a sketch of a cat.", "a toy cat."}},
                             {"dog", {"a photo of a dog."}}},
                            PromptMode::Standard);
  const auto ensemble = ensemble_prototype_sets(a, b, embedder);
  const auto concat = concat_prompt_sets(a, b);
  CHECK(concat.mode == PromptMode::Ensemble);
  CHECK(concat.find("cat")->sentences.size() == 4);
  const auto direct = build_prototype_set(concat, embedder);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(ensemble.prototypes[c].vector == direct.prototypes[c].vector);
    CHECK(ensemble.prototypes[c].source_count == direct.prototypes[c].source_count);
  }

  const auto pa = build_prototype_set(a, embedder);
  const auto pb = build_prototype_set(b, embedder);
  const auto mean_of_means = build_prototype(std::vector<EmbeddingVector>{pa.prototypes[0].vector, pb.prototypes[0].vector});
  CHECK(max_abs_diff(mean_of_means, ensemble.prototypes[0].vector) > 1e-3);
}

TEST_CASE("ensembling needs matching classes") {
  HashEmbedder embedder(8);
  const auto a = prompt_set({{"cat", {"x."}}, {"dog", {"y."}}});
  const auto swapped = prompt_set({{"dog", {"y."}}, {"cat", {"x."}}});
  CHECK(error_of([&] { concat_prompt_sets(a, swapped); }).code() == ErrorCode::ClassMismatch);
  auto other = a;
  other.dataset_id = "other";
  CHECK(error_of([&] { concat_prompt_sets(a, other); }).code() == ErrorCode::ClassMismatch);
  auto unknown = a;
  unknown.dataset_id.clear();
  CHECK(concat_prompt_sets(unknown, other).dataset_id == "other");
  CHECK(concat_prompt_sets(a, unknown).dataset_id == "d");
}

TEST_CASE("prototype sets persist exactly") {
  TempDir dir;
  HashEmbedder embedder(16, 0);
  const auto set = build_prototype_set(prompt_set({{"cat", {"x.", "y."}}, {"kit fox", {"z."}}}), embedder);
  save_prototype_set(set, dir / "p.jsonl");
  CHECK(std::filesystem::exists(dir / "p.meta.json"));
  const auto back = load_prototype_set(dir / "p.jsonl");
  CHECK(back.dataset_id == "d");
  CHECK(back.mode == "full");
  CHECK(back.dim == 16);
  REQUIRE(back.size() == 2);
  CHECK(back.prototypes[1].class_label == "kit fox");
  CHECK(back.prototypes[0].source_count == 2);
  CHECK(back.prototypes[1].vector == set.prototypes[1].vector);

  std::ofstream(dir / "bad.jsonl") << "{\"key\":\"a\",\"vec\":[1,1]}\n";
  CHECK(error_of([&] { load_prototype_set(dir / "bad.jsonl"); }).code() == ErrorCode::ParseError);
}
