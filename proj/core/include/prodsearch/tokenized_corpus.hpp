#pragma once

#include <unordered_map>
#include <vector>

#include "prodsearch/corpus.hpp"
#include "prodsearch/tokenizer.hpp"

namespace prodsearch {

/// Token ids of every product and query in a corpus under one vocabulary.
/// Products keep the corpus order.
struct TokenizedCorpus {
  std::uint64_t vocab_fingerprint = 0;
  std::vector<ProductId> product_ids;
  std::vector<std::vector<TokenId>> product_tokens;
  /// Normalized titles, parallel to product_ids.
  std::vector<std::string> product_titles;
  std::unordered_map<ProductId, std::size_t> product_pos;
  std::unordered_map<QueryId, std::vector<TokenId>> query_tokens;

  const std::vector<TokenId>& tokens_of_product(ProductId id) const {
    return product_tokens[product_pos.at(id)];
  }
  const std::string& title_of_product(ProductId id) const { return product_titles[product_pos.at(id)]; }
};

TokenizedCorpus tokenize_corpus(const Corpus& corpus, const Vocabulary& vocab, ProductTextMode mode);

}  // namespace prodsearch
