#pragma once

#include <set>
#include <string>
#include <vector>

#include "prodsearch/corpus.hpp"
#include "prodsearch/encoder.hpp"
#include "prodsearch/index.hpp"
#include "prodsearch/pipeline.hpp"
#include "prodsearch/synthetic.hpp"
#include "prodsearch/tokenized_corpus.hpp"
#include "prodsearch/tokenizer.hpp"

namespace scenario {

using namespace prodsearch;

/// A synthetic catalog with a trained vocabulary and a freshly initialized model.
struct Scenario {
  Corpus corpus;
  Vocabulary vocab;
  TokenizedCorpus data;
  EmbeddingModel model;
  std::set<TokenId> query_vocab;
};

struct Options {
  std::size_t products = 300;
  std::size_t queries = 20;
  std::size_t labels_per_query = 60;
  TokenizerKind tokenizer = TokenizerKind::BPE;
  std::size_t vocab_size = 300;
  bool brands = true;
  ModelVariant variant = ModelVariant::H1;
  std::size_t dim = 16;
  std::uint64_t seed = 1;
};

inline Scenario make(const Options& o) {
  SyntheticSpec spec;
  spec.products = o.products;
  spec.queries = o.queries;
  spec.labels_per_query = o.labels_per_query;
  spec.seed = o.seed;
  Scenario s;
  s.corpus = make_synthetic_corpus(spec);
  std::set<std::string> specials;
  if (o.brands) {
    for (const auto& b : synthetic_brand_list()) specials.insert(b);
  }
  const auto texts = tokenizer_training_texts(s.corpus, ProductTextMode::TitleOnly);
  switch (o.tokenizer) {
    case TokenizerKind::Word:
      s.vocab = train_word(texts, o.vocab_size, specials);
      break;
    case TokenizerKind::BPE:
      s.vocab = train_bpe(texts, o.vocab_size, specials);
      break;
    case TokenizerKind::Unigram:
      s.vocab = train_unigram(texts, o.vocab_size, specials);
      break;
  }
  s.data = tokenize_corpus(s.corpus, s.vocab, ProductTextMode::TitleOnly);
  s.model = EmbeddingModel::initialize(o.variant, o.dim, s.vocab, o.seed);
  s.query_vocab = collect_query_vocab(s.corpus.queries(), s.vocab);
  return s;
}

/// Brute-force max-sim or pooled ranking over the full catalog, sorted by
/// descending score then ascending product id.
template <typename ScoreFn>
std::vector<RetrievedItem> brute_force(const TokenizedCorpus& data, ScoreFn&& score_fn) {
  std::vector<RetrievedItem> out;
  for (std::size_t j = 0; j < data.product_ids.size(); ++j) {
    if (data.product_tokens[j].empty()) continue;
    out.push_back({data.product_ids[j], score_fn(data.product_tokens[j])});
  }
  std::sort(out.begin(), out.end(), [](const RetrievedItem& a, const RetrievedItem& b) {
    return a.score != b.score ? a.score > b.score : a.product_id < b.product_id;
  });
  return out;
}

}  // namespace scenario
