#include <csignal>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "cupl/catalog.hpp"
#include "cupl/embedding.hpp"
#include "cupl/error.hpp"
#include "cupl/eval.hpp"
#include "cupl/fixture_server.hpp"
#include "cupl/io.hpp"
#include "cupl/prompt_factory.hpp"
#include "cupl/synthetic_images.hpp"
#include "cupl/zeroshot.hpp"

namespace {

using namespace cupl;

int serve(const std::string& corpus_path, fixture::FixtureServer::Options options) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto corpus = corpus_path.empty() ? fixture::FixtureCorpus{} : fixture::FixtureCorpus::load(corpus_path);
  fixture::FixtureServer server(std::move(corpus), options);
  std::cout << server.base_url() << std::endl;

  int received = 0;
  sigwait(&signals, &received);
  server.stop();
  return 0;
}

struct ImageArgs {
  std::string catalog, dataset, corpus, wordnet, images_out, manifest_out;
  std::size_t dim = 64;
  std::uint64_t embed_seed = 0;
  fixture::SyntheticImageSpec spec;
  double full_weight = 1.0, standard_weight = 0.7, wordnet_weight = 0.5;
};

int make_images(const ImageArgs& args) {
  const auto catalog = load_catalog(args.catalog);
  const auto& dataset = catalog.dataset(args.dataset);
  fixture::CorpusClient client(std::make_shared<const fixture::FixtureCorpus>(fixture::FixtureCorpus::load(args.corpus)));
  HashEmbedder embedder(args.dim, args.embed_seed);

  GenerateOptions options;
  options.parallelism = 1;
  options.article_overrides = catalog.article_overrides();
  const auto full = generate_prompt_set(dataset, catalog.templates(dataset.dataset_id, CatalogMode::Full),
                                        GenerationConfig{}, client, options);
  const auto standard = standard_prompt_set(dataset, catalog.templates(dataset.dataset_id, CatalogMode::Standard));
  const auto defs = load_wordnet_definitions(args.wordnet);
  const auto wordnet = wordnet_prompt_set(dataset, defs, catalog.article_overrides());

  const auto full_protos = build_prototype_set(full, embedder);
  const auto standard_protos = build_prototype_set(standard, embedder);
  const auto wordnet_protos = build_prototype_set(wordnet, embedder);
  const auto images = fixture::synthesize_images({{&full_protos, args.full_weight},
                                                  {&standard_protos, args.standard_weight},
                                                  {&wordnet_protos, args.wordnet_weight}},
                                                 dataset.dataset_id, args.spec);
  save_embedding_file(images.images, args.images_out);
  write_file_atomic(args.manifest_out, manifest_csv(images.manifest));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fixture LLM and embedding server, plus synthetic image embeddings", "cupl_fixture_server"};
  app.require_subcommand(1);

  std::string corpus_path;
  fixture::FixtureServer::Options options;
  long latency_ms = 0;
  auto* serve_cmd = app.add_subcommand("serve", "serve /completions and /embed_text until interrupted");
  serve_cmd->add_option("--corpus", corpus_path, "completion corpus JSON");
  serve_cmd->add_option("--host", options.host, "bind address");
  serve_cmd->add_option("--port", options.port, "port, 0 for any free port");
  serve_cmd->add_option("--api-key", options.api_key, "require this bearer token");
  serve_cmd->add_option("--embed-dim", options.embed_dim, "embedding dimension");
  serve_cmd->add_option("--embed-seed", options.embed_seed, "embedding seed");
  serve_cmd->add_option("--latency-ms", latency_ms, "delay per request");
  serve_cmd->add_flag("--synthesize", options.synthesize_unknown, "invent completions for unknown prompts");

  ImageArgs image_args;
  auto* images_cmd = app.add_subcommand("make-images", "write clustered image embeddings and a manifest");
  images_cmd->add_option("--catalog", image_args.catalog, "catalog directory")->required();
  images_cmd->add_option("--dataset", image_args.dataset, "dataset id")->required();
  images_cmd->add_option("--corpus", image_args.corpus, "completion corpus JSON")->required();
  images_cmd->add_option("--wordnet", image_args.wordnet, "WordNet definitions JSONL")->required();
  images_cmd->add_option("--images-out", image_args.images_out, "image embedding JSONL")->required();
  images_cmd->add_option("--manifest-out", image_args.manifest_out, "manifest CSV")->required();
  images_cmd->add_option("--dim", image_args.dim, "embedding dimension");
  images_cmd->add_option("--embed-seed", image_args.embed_seed, "hash embedder seed");
  images_cmd->add_option("--per-class", image_args.spec.per_class, "images per class");
  images_cmd->add_option("--sigma", image_args.spec.sigma, "noise per component");
  images_cmd->add_option("--seed", image_args.spec.seed, "noise seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (serve_cmd->parsed()) {
      options.latency = std::chrono::milliseconds(latency_ms);
      return serve(corpus_path, options);
    }
    return make_images(image_args);
  } catch (const cupl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.category() == cupl::ErrorCategory::Io ? 4 : e.category() == cupl::ErrorCategory::Upstream ? 3 : 2;
  }
}
