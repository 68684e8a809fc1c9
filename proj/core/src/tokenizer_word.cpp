#include <algorithm>

#include "prodsearch/errors.hpp"
#include "prodsearch/tokenizer.hpp"

namespace prodsearch {

Vocabulary train_word(std::span<const std::string> corpus_texts, std::size_t max_vocab,
                      const std::set<std::string>& special_terms) {
  if (corpus_texts.empty()) throw DataError("word tokenizer: training corpus is empty");
  if (max_vocab < special_terms.size() + 1) {
    throw ConfigError("word tokenizer: max_vocab " + std::to_string(max_vocab) +
                      " cannot hold " + std::to_string(special_terms.size()) +
                      " special terms plus <unk>");
  }

  const auto counts = detail::count_words(corpus_texts, special_terms);
  std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens{std::string(kUnkToken)};
  tokens.insert(tokens.end(), special_terms.begin(), special_terms.end());
  for (const auto& [word, count] : ranked) {
    if (tokens.size() >= max_vocab) break;
    if (special_terms.contains(word) || word == kUnkToken) continue;
    tokens.push_back(word);
  }
  return Vocabulary(TokenizerKind::Word, std::move(tokens), special_terms, {}, {});
}

}  // namespace prodsearch
