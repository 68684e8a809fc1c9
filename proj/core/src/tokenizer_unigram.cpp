#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "prodsearch/errors.hpp"
#include "prodsearch/text.hpp"
#include "prodsearch/tokenizer.hpp"

namespace prodsearch {
namespace {

struct StringHash {
  using is_transparent = void;
  std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
};

struct Piece {
  std::string surface;
  double log_prob = 0.0;
  double expected_count = 0.0;
  bool is_char = false;
};

struct WordEntry {
  std::string text;
  std::vector<std::size_t> offsets;
  double count = 0.0;
};

// Counts below this are floored so log-probabilities stay finite.
constexpr double kMinCount = 1e-9;

double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

class PieceTable {
 public:
  explicit PieceTable(std::vector<Piece> pieces) : pieces_(std::move(pieces)) { reindex(); }

  std::vector<Piece>& pieces() { return pieces_; }
  const std::vector<Piece>& pieces() const { return pieces_; }

  std::optional<std::size_t> find(std::string_view s) const {
    auto it = index_.find(s);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  void reindex() {
    index_.clear();
    index_.reserve(pieces_.size());
    for (std::size_t i = 0; i < pieces_.size(); ++i) index_.emplace(pieces_[i].surface, i);
  }

 private:
  std::vector<Piece> pieces_;
  std::unordered_map<std::string, std::size_t, StringHash, std::equal_to<>> index_;
};

/// One EM step: expected piece counts by forward-backward over each word's
/// segmentation lattice, then renormalize.
void em_step(PieceTable& table, const std::vector<WordEntry>& words) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  auto& pieces = table.pieces();
  std::vector<double> counts(pieces.size(), 0.0);
  std::vector<double> alpha, beta;
  for (const auto& w : words) {
    const std::size_t n = w.offsets.size() - 1;
    alpha.assign(n + 1, kNegInf);
    beta.assign(n + 1, kNegInf);
    alpha[0] = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
      for (std::size_t len = 1; len <= std::min(kMaxUnigramPieceLength, j); ++len) {
        const std::size_t i = j - len;
        auto id = table.find(std::string_view(w.text).substr(w.offsets[i], w.offsets[j] - w.offsets[i]));
        if (id) alpha[j] = log_add(alpha[j], alpha[i] + pieces[*id].log_prob);
      }
    }
    beta[n] = 0.0;
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t len = 1; len <= std::min(kMaxUnigramPieceLength, n - i); ++len) {
        const std::size_t j = i + len;
        auto id = table.find(std::string_view(w.text).substr(w.offsets[i], w.offsets[j] - w.offsets[i]));
        if (id) beta[i] = log_add(beta[i], pieces[*id].log_prob + beta[j]);
      }
    }
    const double z = alpha[n];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t len = 1; len <= std::min(kMaxUnigramPieceLength, n - i); ++len) {
        const std::size_t j = i + len;
        auto id = table.find(std::string_view(w.text).substr(w.offsets[i], w.offsets[j] - w.offsets[i]));
        if (id) counts[*id] += w.count * std::exp(alpha[i] + pieces[*id].log_prob + beta[j] - z);
      }
    }
  }
  double total = 0.0;
  for (double& c : counts) {
    c = std::max(c, kMinCount);
    total += c;
  }
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    pieces[i].expected_count = counts[i];
    pieces[i].log_prob = std::log(counts[i] / total);
  }
}

UnigramSegmentation best_segmentation(const PieceTable& table, std::string_view word,
                                      std::optional<std::size_t> excluded) {
  const auto& pieces = table.pieces();
  return viterbi_segment(
      word,
      [&](std::string_view s) -> std::optional<double> {
        auto id = table.find(s);
        if (!id || id == excluded) return std::nullopt;
        return pieces[*id].log_prob;
      },
      -1e9);
}

}  // namespace

Vocabulary train_unigram(std::span<const std::string> corpus_texts, std::size_t vocab_size,
                         const std::set<std::string>& special_terms, const UnigramOptions& options) {
  if (corpus_texts.empty()) throw DataError("unigram tokenizer: training corpus is empty");
  if (!(options.prune_fraction > 0.0 && options.prune_fraction < 1.0)) {
    throw ConfigError("unigram tokenizer: prune_fraction must lie in (0, 1)");
  }
  if (options.seed_multiplier < 1.0) {
    throw ConfigError("unigram tokenizer: seed_multiplier must be at least 1");
  }

  const auto counts = detail::count_words(corpus_texts, special_terms);
  std::vector<WordEntry> words;
  words.reserve(counts.size());
  std::set<std::string> alphabet;
  std::unordered_map<std::string, double> substring_freq;
  for (const auto& [word, count] : counts) {
    WordEntry w{word, detail::codepoint_offsets(word), static_cast<double>(count)};
    const std::size_t n = w.offsets.size() - 1;
    for (std::size_t i = 0; i < n; ++i) {
      alphabet.insert(word.substr(w.offsets[i], w.offsets[i + 1] - w.offsets[i]));
      for (std::size_t len = 1; len <= std::min(kMaxUnigramPieceLength, n - i); ++len) {
        substring_freq[word.substr(w.offsets[i], w.offsets[i + len] - w.offsets[i])] += w.count;
      }
    }
    words.push_back(std::move(w));
  }

  std::size_t specials_in_alphabet = 0;
  for (const auto& t : special_terms) specials_in_alphabet += alphabet.contains(t) ? 1 : 0;
  const std::size_t required = alphabet.size() + special_terms.size() - specials_in_alphabet;
  if (vocab_size < required) {
    throw ConfigError("unigram tokenizer: vocab_size " + std::to_string(vocab_size) +
                      " is smaller than alphabet plus special terms (" + std::to_string(required) + ")");
  }
  // Pieces that are not special terms; special terms are added back at the end.
  std::size_t target_pieces = vocab_size - (special_terms.size() - specials_in_alphabet);

  // Seed inventory: every character plus the most frequent longer substrings.
  std::vector<std::pair<std::string, double>> multi;
  for (const auto& [s, f] : substring_freq) {
    if (codepoint_count(s) > 1 && !special_terms.contains(s)) multi.emplace_back(s, f);
  }
  std::sort(multi.begin(), multi.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const auto seed_cap = static_cast<std::size_t>(std::ceil(options.seed_multiplier * static_cast<double>(vocab_size)));
  const std::size_t keep_multi = seed_cap > alphabet.size() ? seed_cap - alphabet.size() : 0;
  if (multi.size() > keep_multi) multi.resize(keep_multi);

  std::vector<Piece> seed;
  double total = 0.0;
  for (const auto& ch : alphabet) {
    seed.push_back(Piece{ch, 0.0, 0.0, true});
    total += substring_freq[ch];
  }
  for (const auto& [s, f] : multi) {
    seed.push_back(Piece{s, 0.0, 0.0, false});
    total += f;
  }
  for (auto& p : seed) p.log_prob = std::log(substring_freq[p.surface] / total);
  PieceTable table(std::move(seed));

  while (true) {
    for (std::size_t it = 0; it < options.em_iterations; ++it) em_step(table, words);
    auto& pieces = table.pieces();
    if (pieces.size() <= target_pieces) break;

    // Viterbi usage of each piece over the corpus.
    std::vector<double> viterbi_freq(pieces.size(), 0.0);
    for (const auto& w : words) {
      for (const auto& s : best_segmentation(table, w.text, std::nullopt).pieces) {
        viterbi_freq[*table.find(s)] += w.count;
      }
    }
    // Loss increase from removing a piece: its uses fall back to the best
    // segmentation of its own surface without it.
    struct Candidate {
      std::size_t id;
      double loss;
    };
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      if (pieces[i].is_char) continue;
      double loss = 0.0;
      if (viterbi_freq[i] > 0.0) {
        const auto alt = best_segmentation(table, pieces[i].surface, i);
        loss = viterbi_freq[i] * (pieces[i].log_prob - alt.score);
      }
      candidates.push_back({i, loss});
    }
    if (candidates.empty()) break;
    std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
      if (a.loss != b.loss) return a.loss < b.loss;
      if (pieces[a.id].expected_count != pieces[b.id].expected_count) {
        return pieces[a.id].expected_count < pieces[b.id].expected_count;
      }
      return pieces[a.id].surface < pieces[b.id].surface;
    });
    const std::size_t excess = pieces.size() - target_pieces;
    const auto fraction = static_cast<std::size_t>(options.prune_fraction * static_cast<double>(pieces.size()));
    const std::size_t remove = std::min({excess, std::max<std::size_t>(1, fraction), candidates.size()});
    std::vector<bool> drop(pieces.size(), false);
    for (std::size_t k = 0; k < remove; ++k) drop[candidates[k].id] = true;
    std::vector<Piece> kept;
    kept.reserve(pieces.size() - remove);
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      if (!drop[i]) kept.push_back(std::move(pieces[i]));
    }
    pieces = std::move(kept);
    table.reindex();
  }

  auto pieces = table.pieces();
  std::sort(pieces.begin(), pieces.end(), [](const Piece& a, const Piece& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.surface < b.surface;
  });
  double min_lp = 0.0;
  for (const auto& p : pieces) min_lp = std::min(min_lp, p.log_prob);
  const double reserved_lp = min_lp - 10.0;

  std::vector<std::string> tokens{std::string(kUnkToken)};
  std::vector<double> log_probs{reserved_lp};
  for (const auto& term : special_terms) {
    tokens.push_back(term);
    log_probs.push_back(reserved_lp);
  }
  for (auto& p : pieces) {
    if (special_terms.contains(p.surface)) continue;
    tokens.push_back(std::move(p.surface));
    log_probs.push_back(p.log_prob);
  }
  return Vocabulary(TokenizerKind::Unigram, std::move(tokens), special_terms, {}, std::move(log_probs));
}

}  // namespace prodsearch
