#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "prodsearch/build_info.hpp"
#include "prodsearch/config.hpp"
#include "prodsearch/errors.hpp"
#include "prodsearch/pipeline.hpp"

namespace {

using prodsearch::CommandStatus;

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

prodsearch::RunConfig resolve_config(const GlobalOptions& g) {
  std::vector<std::string> overrides = g.overrides;
  if (g.seed) overrides.push_back("run.seed=" + std::to_string(*g.seed));
  return prodsearch::load_config(g.config_path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid term-index product search: tokenizer and encoder training, indexing, search and evaluation"};
  app.set_version_flag("--version", std::string(prodsearch::build_version()));
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("-c,--config", g.config_path, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "Override a configuration key, section.key=value (repeatable)");
  app.add_option("--seed", g.seed, "Global seed, overrides run.seed");
  app.add_flag("-v,--verbose", g.verbose, "Verbose progress on stderr");

  auto* train_tok = app.add_subcommand("train-tokenizer", "Train the configured tokenizer and write the vocabulary");
  auto* train_enc = app.add_subcommand("train-encoder", "Train the embedding model and write it with a training log");
  auto* build = app.add_subcommand("build-index", "Build the thresholded term index");
  auto* search = app.add_subcommand("search", "Run one query against the index");
  std::string query;
  std::size_t top_k = 10;
  search->add_option("query", query, "Query text")->required();
  search->add_option("-k,--top-k", top_k, "Number of results")->check(CLI::PositiveNumber);
  auto* eval = app.add_subcommand("evaluate", "Evaluate all judged queries in both rescoring modes");
  auto* ablate = app.add_subcommand("ablate", "Run the tokenizer x mt x dim x model grid");
  auto* brands = app.add_subcommand("suggest-brands",
                                     "Write a heuristic brand list from capitalized bigrams in the product file");
  std::string brands_out;
  std::size_t brands_max = 50, brands_min = 3;
  brands->add_option("out", brands_out, "Output file, one term per line")->required();
  brands->add_option("--max-terms", brands_max, "Largest list size");
  brands->add_option("--min-products", brands_min, "Products a bigram must appear in");
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus and brand list");
  prodsearch::SyntheticSpec spec;
  std::string synth_dir;
  synth->add_option("dir", synth_dir, "Output directory")->required();
  synth->add_option("--products", spec.products, "Product count");
  synth->add_option("--queries", spec.queries, "Query count");
  synth->add_option("--labels-per-query", spec.labels_per_query, "Judged products per query");
  synth->add_option("--duplicate-rate", spec.duplicate_title_rate, "Fraction of duplicated titles");
  synth->add_option("--corpus-seed", spec.seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? CommandStatus::kOk : CommandStatus::kUsage;
  }

  prodsearch::Console console(std::cout, std::cerr, g.verbose);
  try {
    if (synth->parsed()) {
      const auto paths = prodsearch::write_synthetic_dataset(spec, synth_dir);
      console.info("wrote " + paths.products.string() + ", " + paths.queries.string() + ", " +
                   paths.labels.string());
      return CommandStatus::kOk;
    }
    const prodsearch::RunConfig config = resolve_config(g);
    if (brands->parsed()) {
      if (config.data.products.empty()) throw prodsearch::ConfigError("data.products must be set");
      const auto terms = prodsearch::suggest_brand_terms(config.data.products, brands_max, brands_min);
      std::ofstream out(brands_out, std::ios::binary);
      if (!out) throw prodsearch::DataError("cannot write " + brands_out);
      for (const auto& t : terms) out << t << "\n";
      console.info("wrote " + std::to_string(terms.size()) + " terms to " + brands_out);
      return CommandStatus::kOk;
    }
    if (train_tok->parsed()) prodsearch::cmd_train_tokenizer(config, console);
    if (train_enc->parsed()) prodsearch::cmd_train_encoder(config, console);
    if (build->parsed()) prodsearch::cmd_build_index(config, console);
    if (search->parsed()) return prodsearch::cmd_search(config, query, top_k, console);
    if (eval->parsed()) prodsearch::cmd_evaluate(config, console);
    if (ablate->parsed()) prodsearch::cmd_ablate(config, console);
    return CommandStatus::kOk;
  } catch (const prodsearch::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return CommandStatus::kUsage;
  } catch (const prodsearch::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return CommandStatus::kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return CommandStatus::kInvariant;
  }
}
