#include <limits>

#include "prodsearch/text.hpp"
#include "prodsearch/tokenized_corpus.hpp"
#include "prodsearch/tokenizer.hpp"

namespace prodsearch {
namespace {

std::vector<std::string> segment_bpe(const Vocabulary& vocab, std::string_view word) {
  std::vector<std::string> symbols = split_codepoints(word);
  while (symbols.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      if (auto rank = vocab.merge_rank(symbols[i], symbols[i + 1]); rank && *rank < best_rank) {
        best_rank = *rank;
        best_pos = i;
      }
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    const std::string left = symbols[best_pos];
    const std::string right = symbols[best_pos + 1];
    std::vector<std::string> next;
    next.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size();) {
      if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
        next.push_back(left + right);
        i += 2;
      } else {
        next.push_back(std::move(symbols[i]));
        ++i;
      }
    }
    symbols = std::move(next);
  }
  return symbols;
}

std::vector<std::string> segment_unigram(const Vocabulary& vocab, std::string_view word) {
  const auto& log_probs = vocab.log_probs();
  const auto& specials = vocab.special_terms();
  auto seg = viterbi_segment(
      word,
      [&](std::string_view piece) -> std::optional<double> {
        auto id = vocab.find(piece);
        if (!id || *id == kUnkId) return std::nullopt;
        if (!specials.empty() && specials.contains(std::string(piece))) return std::nullopt;
        return log_probs[*id];
      },
      vocab.unknown_log_prob());
  return std::move(seg.pieces);
}

}  // namespace

std::vector<std::string> segment_word(const Vocabulary& vocab, std::string_view word) {
  switch (vocab.kind()) {
    case TokenizerKind::Word: return {std::string(word)};
    case TokenizerKind::BPE: return segment_bpe(vocab, word);
    case TokenizerKind::Unigram: return segment_unigram(vocab, word);
  }
  return {std::string(word)};
}

namespace {

template <typename SegmentFn>
TokenSequence tokenize_impl(const Vocabulary& vocab, std::string_view text, SegmentFn&& segment) {
  TokenSequence out;
  for (const auto& span : vocab.special_matcher().split(text)) {
    if (span.special) {
      out.ids.push_back(*vocab.find(span.text));
      out.surfaces.emplace_back(span.text);
      out.space_before.push_back(span.space_before ? 1 : 0);
      continue;
    }
    bool first = true;
    for (const auto& [id, piece] : segment(span.text)) {
      out.ids.push_back(id);
      out.surfaces.push_back(piece);
      out.space_before.push_back(first && span.space_before ? 1 : 0);
      first = false;
    }
  }
  return out;
}

std::vector<std::pair<TokenId, std::string>> segment_with_ids(const Vocabulary& vocab,
                                                              std::string_view word) {
  std::vector<std::pair<TokenId, std::string>> out;
  for (auto& piece : segment_word(vocab, word)) {
    const TokenId id = vocab.find(piece).value_or(kUnkId);
    out.emplace_back(id, std::move(piece));
  }
  return out;
}

}  // namespace

TokenSequence tokenize(const Vocabulary& vocab, std::string_view text) {
  return tokenize_impl(vocab, text, [&](std::string_view word) { return segment_with_ids(vocab, word); });
}

TokenSequence CachingTokenizer::operator()(std::string_view text) {
  return tokenize_impl(vocab_, text,
                       [&](std::string_view word) -> const std::vector<std::pair<TokenId, std::string>>& {
                         auto it = cache_.find(word);
                         if (it == cache_.end()) {
                           it = cache_.emplace(std::string(word), segment_with_ids(vocab_, word)).first;
                         }
                         return it->second;
                       });
}

}  // namespace prodsearch

namespace prodsearch {

TokenizedCorpus tokenize_corpus(const Corpus& corpus, const Vocabulary& vocab, ProductTextMode mode) {
  CachingTokenizer tok(vocab);
  TokenizedCorpus out;
  out.vocab_fingerprint = vocab.fingerprint();
  const auto& products = corpus.products();
  out.product_ids.reserve(products.size());
  out.product_tokens.reserve(products.size());
  out.product_titles.reserve(products.size());
  for (std::size_t i = 0; i < products.size(); ++i) {
    out.product_ids.push_back(products[i].id);
    out.product_tokens.push_back(tok(product_text(products[i], mode)).ids);
    out.product_titles.push_back(products[i].title);
    out.product_pos.emplace(products[i].id, i);
  }
  for (const auto& q : corpus.queries()) out.query_tokens.emplace(q.id, tok(q.text).ids);
  return out;
}

}  // namespace prodsearch
