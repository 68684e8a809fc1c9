#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "prodsearch/corpus.hpp"
#include "prodsearch/encoder.hpp"
#include "prodsearch/tokenized_corpus.hpp"

namespace prodsearch {

struct Posting {
  ProductId product_id = 0;
  double score = 0.0;

  bool operator==(const Posting&) const = default;
};

/// Query-token -> products whose per-token similarity exceeds `gamma`.
/// Lists are sorted by descending score, ties by ascending product id.
struct TermIndex {
  double gamma = 0.0;
  std::map<TokenId, std::vector<Posting>> postings;
  std::uint64_t vocab_fingerprint = 0;
  std::uint64_t model_fingerprint = 0;
  std::uint64_t product_count = 0;
  std::string provenance;

  std::size_t total_postings() const;
  /// Mean posting-list length over indexed terms (0 for an empty index).
  double mean_list_length() const;

  /// Throws FingerprintError unless built from exactly this model and vocabulary.
  void check(const EmbeddingModel& model, const Vocabulary& vocab) const;

  bool operator==(const TermIndex&) const = default;
};

/// Distinct token ids over all tokenized queries.
std::set<TokenId> collect_query_vocab(std::span<const Query> queries, const Vocabulary& vocab);

/// Scores one query token against every product of a catalog.
///
/// H1: max over the product's tokens of e_t . e_{j,k}. DE/SE: e_t . mean of
/// the product's token embeddings. Values come from the same dot() the
/// encoder uses, so they match encoder scores exactly.
class TermScorer {
 public:
  TermScorer(const EmbeddingModel& model, const TokenizedCorpus& products);

  std::size_t product_count() const { return product_ids_.size(); }
  ProductId product_id(std::size_t j) const { return product_ids_[j]; }
  /// Products with no tokens cannot be scored and are skipped.
  bool scorable(std::size_t j) const { return !unique_tokens_[j].empty(); }

  /// out[j] = score of token `t` against product j (unspecified when !scorable(j)).
  void score_all(TokenId t, std::vector<double>& out) const;

 private:
  const EmbeddingModel& model_;
  std::vector<ProductId> product_ids_;
  std::vector<std::vector<TokenId>> unique_tokens_;
  std::vector<std::vector<double>> product_means_;  // DE/SE only
  mutable std::vector<double> token_sims_;
};

struct ThresholdCalibration {
  double gamma = 0.0;
  /// Mean and standard deviation over all (term, product) scores.
  double score_mean = 0.0;
  double score_stddev = 0.0;
  std::size_t score_count = 0;
  std::size_t target_postings = 0;
};

/// Picks gamma so that about `fraction` of the catalog lands in the average
/// posting list. With K = round(fraction * |terms| * |scorable products|),
/// gamma is the (K+1)-th largest term-product score, or the next lower
/// distinct score when admitting the tie group at the cut gets closer to K.
ThresholdCalibration calibrate_threshold(const TermScorer& scorer, const std::set<TokenId>& query_vocab,
                                         double fraction);

struct BuildResult {
  TermIndex index;
  std::vector<std::string> warnings;
};

/// Builds posting lists for every token of `query_vocab`, storing (t -> j, s)
/// iff s > gamma. Products with empty token sequences are skipped with a
/// warning; an empty query vocabulary yields an empty index with a warning.
BuildResult build_index(const EmbeddingModel& model, const Vocabulary& vocab,
                        const TokenizedCorpus& products, const std::set<TokenId>& query_vocab,
                        double gamma);

enum class RescoringMode : std::uint8_t { Accumulate, Exact };

std::string_view to_string(RescoringMode mode);
RescoringMode parse_rescoring_mode(std::string_view text);

struct RetrievedItem {
  ProductId product_id = 0;
  double score = 0.0;

  bool operator==(const RetrievedItem&) const = default;
};

struct RetrievalResult {
  std::vector<RetrievedItem> items;
  /// Set when the query had no tokens at all.
  bool empty_query = false;
};

/// Candidates are the union of the posting lists of the query's tokens.
/// Accumulate mode sums stored posting scores over query-token occurrences
/// (missing entries add 0); exact mode rescores candidates with score().
/// Results are sorted by descending score, ties by ascending product id, and
/// cut to `limit` items when `limit` > 0.
RetrievalResult retrieve(const TermIndex& index, const EmbeddingModel& model,
                         const TokenizedCorpus& products, std::span<const TokenId> query,
                         RescoringMode mode, std::size_t limit = 0);

std::string serialize_index(const TermIndex& index);
TermIndex parse_index(std::string bytes);
void save_index(const TermIndex& index, const std::filesystem::path& path);
TermIndex load_index(const std::filesystem::path& path);
/// Loads and checks fingerprints against the supplied artifacts.
TermIndex load_index(const std::filesystem::path& path, const EmbeddingModel& model,
                     const Vocabulary& vocab);

}  // namespace prodsearch
