#include <benchmark/benchmark.h>

#include <limits>

#include "prodsearch/encoder.hpp"
#include "prodsearch/index.hpp"
#include "prodsearch/pipeline.hpp"
#include "prodsearch/synthetic.hpp"
#include "prodsearch/tokenized_corpus.hpp"
#include "prodsearch/tokenizer.hpp"

using namespace prodsearch;

namespace {

struct Fixture {
  Corpus corpus;
  Vocabulary vocab;
  TokenizedCorpus data;
  EmbeddingModel model;
  std::set<TokenId> query_vocab;
  TermIndex index;
};

/// Desk-scale catalog with a freshly initialized model of width `dim`.
const Fixture& fixture(ModelVariant variant, std::size_t dim) {
  static std::map<std::pair<ModelVariant, std::size_t>, Fixture> cache;
  auto key = std::make_pair(variant, dim);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  Fixture f;
  SyntheticSpec spec;
  spec.products = 5000;
  spec.queries = 100;
  f.corpus = make_synthetic_corpus(spec);
  const auto brands = synthetic_brand_list();
  f.vocab = train_bpe(tokenizer_training_texts(f.corpus, ProductTextMode::TitleOnly), 2000,
                      std::set<std::string>(brands.begin(), brands.end()));
  f.data = tokenize_corpus(f.corpus, f.vocab, ProductTextMode::TitleOnly);
  f.model = EmbeddingModel::initialize(variant, dim, f.vocab, 1);
  f.query_vocab = collect_query_vocab(f.corpus.queries(), f.vocab);
  const auto cal = calibrate_threshold(TermScorer(f.model, f.data), f.query_vocab, 0.01);
  f.index = build_index(f.model, f.vocab, f.data, f.query_vocab, cal.gamma).index;
  return cache.emplace(key, std::move(f)).first->second;
}

void BM_MaxSim(benchmark::State& state) {
  const auto& f = fixture(ModelVariant::H1, static_cast<std::size_t>(state.range(0)));
  const auto& q = f.data.query_tokens.begin()->second;
  std::size_t j = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(score(f.model, q, f.data.product_tokens[j]));
    j = (j + 1) % f.data.product_tokens.size();
  }
}
BENCHMARK(BM_MaxSim)->Arg(32)->Arg(128)->Arg(768);

void BM_Pooled(benchmark::State& state) {
  const auto& f = fixture(ModelVariant::DE, static_cast<std::size_t>(state.range(0)));
  const auto& q = f.data.query_tokens.begin()->second;
  std::size_t j = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(score(f.model, q, f.data.product_tokens[j]));
    j = (j + 1) % f.data.product_tokens.size();
  }
}
BENCHMARK(BM_Pooled)->Arg(32)->Arg(128)->Arg(768);

void BM_TokenizeBpe(benchmark::State& state) {
  const auto& f = fixture(ModelVariant::H1, 32);
  std::size_t j = 0;
  std::size_t bytes = 0;
  for (auto _ : state) {
    const auto& title = f.corpus.products()[j].title;
    benchmark::DoNotOptimize(tokenize(f.vocab, title));
    bytes += title.size();
    j = (j + 1) % f.corpus.products().size();
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(bytes));
}
BENCHMARK(BM_TokenizeBpe);

void BM_BuildIndex(benchmark::State& state) {
  const auto& f = fixture(ModelVariant::H1, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_index(f.model, f.vocab, f.data, f.query_vocab, f.index.gamma));
  }
}
BENCHMARK(BM_BuildIndex)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Retrieve(benchmark::State& state) {
  const auto& f = fixture(ModelVariant::H1, 64);
  const auto mode = state.range(0) == 0 ? RescoringMode::Accumulate : RescoringMode::Exact;
  auto it = f.data.query_tokens.begin();
  for (auto _ : state) {
    benchmark::DoNotOptimize(retrieve(f.index, f.model, f.data, it->second, mode, 1000));
    if (++it == f.data.query_tokens.end()) it = f.data.query_tokens.begin();
  }
  state.SetLabel(std::string(to_string(mode)));
}
BENCHMARK(BM_Retrieve)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
