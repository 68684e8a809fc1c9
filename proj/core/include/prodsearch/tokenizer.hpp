#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace prodsearch {

using TokenId = std::uint32_t;

enum class TokenizerKind : std::uint8_t { Word, BPE, Unigram };

std::string_view to_string(TokenizerKind kind);
/// Accepts word / bpe / unigram (case-insensitive). Throws ConfigError.
TokenizerKind parse_tokenizer_kind(std::string_view text);

/// Reserved out-of-vocabulary token. Always id 0.
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr TokenId kUnkId = 0;

/// Longest piece a unigram vocabulary may hold, in code points.
inline constexpr std::size_t kMaxUnigramPieceLength = 16;

/// A piece of normalized text: either one special term or one plain word.
struct TextSpan {
  std::string_view text;
  bool special = false;
  bool space_before = false;
};

/// Finds special terms in normalized text: longest match (most words) first,
/// scanning left to right, only at word boundaries. Matches may span spaces.
class SpecialTermMatcher {
 public:
  SpecialTermMatcher() = default;
  explicit SpecialTermMatcher(const std::set<std::string>& terms);

  std::vector<TextSpan> split(std::string_view text) const;

 private:
  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  // First word -> (term, word count), most words first.
  std::unordered_map<std::string, std::vector<std::pair<std::string, std::size_t>>, StringHash,
                     std::equal_to<>>
      by_first_word_;
};

/// A trained token inventory.
///
/// Id layout: 0 is <unk>, then the special terms in lexicographic order, then
/// the kind-specific tokens (frequent words; the BPE alphabet followed by merge
/// results in merge order; unigram pieces). Special terms may contain spaces
/// and are the only tokens that do.
class Vocabulary {
 public:
  using Merge = std::pair<std::string, std::string>;

  Vocabulary() = default;
  /// Validates ids, special-term membership, merge consistency and unigram
  /// log-probabilities. Throws DataError on violation.
  Vocabulary(TokenizerKind kind, std::vector<std::string> tokens,
             std::set<std::string> special_terms, std::vector<Merge> merges,
             std::vector<double> log_probs, std::string provenance = {});

  TokenizerKind kind() const { return kind_; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::optional<TokenId> find(std::string_view surface) const;
  const std::set<std::string>& special_terms() const { return special_terms_; }
  const std::vector<Merge>& merges() const { return merges_; }
  /// Parallel to tokens(); empty unless kind() == Unigram.
  const std::vector<double>& log_probs() const { return log_probs_; }
  /// Score charged for a character missing from a unigram vocabulary.
  double unknown_log_prob() const { return unknown_log_prob_; }
  /// Free-form text (the producing run's configuration). Not part of the
  /// fingerprint.
  const std::string& provenance() const { return provenance_; }
  void set_provenance(std::string provenance) { provenance_ = std::move(provenance); }

  /// Hash of kind, tokens, special terms, merges and log-probs.
  std::uint64_t fingerprint() const { return fingerprint_; }

  /// Rank of a BPE merge, if present.
  std::optional<std::size_t> merge_rank(std::string_view left, std::string_view right) const;

  const SpecialTermMatcher& special_matcher() const { return matcher_; }

  bool operator==(const Vocabulary& other) const;

 private:
  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  using Lookup = std::unordered_map<std::string, TokenId, StringHash, std::equal_to<>>;

  TokenizerKind kind_ = TokenizerKind::Word;
  std::vector<std::string> tokens_;
  std::set<std::string> special_terms_;
  std::vector<Merge> merges_;
  std::vector<double> log_probs_;
  std::string provenance_;

  Lookup token_to_id_;
  std::unordered_map<std::string, std::size_t, StringHash, std::equal_to<>> merge_rank_;
  SpecialTermMatcher matcher_;
  double unknown_log_prob_ = 0.0;
  std::uint64_t fingerprint_ = 0;
};

/// Token ids plus the exact text spans they came from.
///
/// Joining rule: concatenate surfaces, inserting one space before every token
/// whose `space_before` flag is set. This reproduces the normalized input.
struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<std::string> surfaces;
  std::vector<std::uint8_t> space_before;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  std::string join() const;

  bool operator==(const TokenSequence&) const = default;
};

/// Whitespace words; the top `max_vocab - |special_terms| - 1` words by
/// frequency (ties lexicographic) join <unk> and the special terms.
Vocabulary train_word(std::span<const std::string> corpus_texts, std::size_t max_vocab,
                      const std::set<std::string>& special_terms);

/// Character-level BPE within words. `vocab_size` counts the alphabet, merge
/// results and special terms (not <unk>). Pair ties go to the lexicographically
/// smallest (left, right) surface pair.
Vocabulary train_bpe(std::span<const std::string> corpus_texts, std::size_t vocab_size,
                     const std::set<std::string>& special_terms);

struct UnigramOptions {
  double seed_multiplier = 4.0;
  double prune_fraction = 0.25;
  std::size_t em_iterations = 2;
};

/// Unigram language-model vocabulary: frequent substrings seed the inventory,
/// then Viterbi-EM refits and the least costly pieces are pruned until
/// `vocab_size` (alphabet + pieces + special terms, not <unk>) remains. Single
/// characters and special terms are never pruned.
Vocabulary train_unigram(std::span<const std::string> corpus_texts, std::size_t vocab_size,
                         const std::set<std::string>& special_terms,
                         const UnigramOptions& options = {});

/// Special terms are matched first, longest match left to right, at word
/// boundaries and across spaces. The remaining words are segmented by kind:
/// vocabulary lookup (Word), merges in rank order (BPE), or max log-prob
/// Viterbi with ties to fewer tokens then a longer first piece (Unigram).
/// Characters unknown to a subword vocabulary become <unk> tokens that keep
/// their surface. `text` must already be normalized.
TokenSequence tokenize(const Vocabulary& vocab, std::string_view text);

/// tokenize() with a per-word segmentation cache, for bulk tokenization of a
/// corpus. Not thread-safe; use one instance per thread.
class CachingTokenizer {
 public:
  explicit CachingTokenizer(const Vocabulary& vocab) : vocab_(vocab) {}
  TokenSequence operator()(std::string_view text);
  const Vocabulary& vocab() const { return vocab_; }

 private:
  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  const Vocabulary& vocab_;
  std::unordered_map<std::string, std::vector<std::pair<TokenId, std::string>>, StringHash,
                     std::equal_to<>>
      cache_;
};

/// Segments one word (no spaces) without special-term matching. Exposed for
/// the oracle tests.
std::vector<std::string> segment_word(const Vocabulary& vocab, std::string_view word);

/// Unigram Viterbi over one word. `log_prob` returns the score of a piece or
/// nullopt if it is not in the inventory; characters it rejects cost
/// `unknown_log_prob`. Returns the chosen pieces and their total score.
struct UnigramSegmentation {
  std::vector<std::string> pieces;
  double score = 0.0;
};
template <typename LogProbFn>
UnigramSegmentation viterbi_segment(std::string_view word, LogProbFn&& log_prob,
                                    double unknown_log_prob);

/// Reads a brand list: one term per line, normalized, blank lines skipped.
std::set<std::string> load_special_terms(const std::filesystem::path& path);

std::string serialize_vocab(const Vocabulary& vocab);
Vocabulary parse_vocab(std::string_view bytes);
void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocab(const std::filesystem::path& path);

namespace detail {

/// Word frequencies over the corpus with special-term occurrences removed.
std::map<std::string, std::uint64_t> count_words(std::span<const std::string> corpus_texts,
                                                 const std::set<std::string>& special_terms);

/// Byte offsets of code point boundaries, including 0 and word.size().
std::vector<std::size_t> codepoint_offsets(std::string_view word);

}  // namespace detail

template <typename LogProbFn>
UnigramSegmentation viterbi_segment(std::string_view word, LogProbFn&& log_prob,
                                    double unknown_log_prob) {
  const std::vector<std::size_t> off = detail::codepoint_offsets(word);
  const std::size_t n = off.size() - 1;
  struct Cell {
    double score;
    std::size_t tokens;
    std::size_t first_len;
  };
  // best[i] describes the best segmentation of the suffix starting at code point i.
  std::vector<Cell> best(n + 1, Cell{0.0, 0, 0});
  for (std::size_t i = n; i-- > 0;) {
    bool have = false;
    Cell chosen{0.0, 0, 0};
    const std::size_t max_len = std::min(kMaxUnigramPieceLength, n - i);
    for (std::size_t len = 1; len <= max_len; ++len) {
      const std::string_view piece = word.substr(off[i], off[i + len] - off[i]);
      std::optional<double> lp = log_prob(piece);
      if (!lp) {
        if (len != 1) continue;
        lp = unknown_log_prob;
      }
      const Cell cand{*lp + best[i + len].score, 1 + best[i + len].tokens, len};
      const bool better = !have || cand.score > chosen.score ||
                          (cand.score == chosen.score &&
                           (cand.tokens < chosen.tokens ||
                            (cand.tokens == chosen.tokens && cand.first_len > chosen.first_len)));
      if (better) {
        chosen = cand;
        have = true;
      }
    }
    best[i] = chosen;
  }
  UnigramSegmentation out;
  out.score = n == 0 ? 0.0 : best[0].score;
  for (std::size_t i = 0; i < n;) {
    const std::size_t len = best[i].first_len;
    out.pieces.emplace_back(word.substr(off[i], off[i + len] - off[i]));
    i += len;
  }
  return out;
}

}  // namespace prodsearch
