#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prodsearch/tokenizer.hpp"

namespace prodsearch {

/// H1: separate query/product tables scored with token-wise max-sim.
/// DE: separate tables scored by the dot product of mean-pooled vectors.
/// SE: one shared table, mean-pooled like DE.
enum class ModelVariant : std::uint8_t { H1, DE, SE };

std::string_view to_string(ModelVariant variant);
ModelVariant parse_model_variant(std::string_view text);

enum class Side : std::uint8_t { Query, Product };

/// Dense row-major |V| x dim matrix of doubles.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t rows, std::size_t dim) : rows_(rows), dim_(dim), data_(rows * dim, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * dim_, dim_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * dim_, dim_}; }
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  bool operator==(const EmbeddingTable&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Token embedding tables bound to one vocabulary.
///
/// For SE the product side aliases the query table: table(Side::Product)
/// returns the same object as table(Side::Query), so writes through either
/// are visible through both.
class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  EmbeddingModel(ModelVariant variant, std::uint64_t vocab_fingerprint, std::uint64_t seed,
                 EmbeddingTable query_table, EmbeddingTable product_table);

  /// Uniform init in [-1/sqrt(dim), 1/sqrt(dim)], query table drawn first.
  static EmbeddingModel initialize(ModelVariant variant, std::size_t dim, const Vocabulary& vocab,
                                   std::uint64_t seed);

  ModelVariant variant() const { return variant_; }
  std::size_t dim() const { return query_.dim(); }
  std::size_t vocab_size() const { return query_.rows(); }
  std::uint64_t vocab_fingerprint() const { return vocab_fingerprint_; }
  std::uint64_t seed() const { return seed_; }
  bool shares_tables() const { return variant_ == ModelVariant::SE; }

  const EmbeddingTable& table(Side side) const {
    return side == Side::Product && !shares_tables() ? product_ : query_;
  }
  EmbeddingTable& table(Side side) {
    return side == Side::Product && !shares_tables() ? product_ : query_;
  }
  std::span<const double> row(Side side, TokenId id) const { return table(side).row(id); }

  /// Throws FingerprintError unless this model was built for `vocab`.
  void check_vocab(const Vocabulary& vocab) const;

  /// Hash of variant, dims, vocabulary fingerprint, seed and table contents.
  std::uint64_t fingerprint() const;

  const std::string& provenance() const { return provenance_; }
  void set_provenance(std::string provenance) { provenance_ = std::move(provenance); }

  bool operator==(const EmbeddingModel& other) const;

 private:
  ModelVariant variant_ = ModelVariant::H1;
  std::uint64_t vocab_fingerprint_ = 0;
  std::uint64_t seed_ = 0;
  EmbeddingTable query_;
  EmbeddingTable product_;  // empty for SE
  std::string provenance_;
};

/// Per-token vectors of one text, m x dim row-major.
struct EncodedText {
  std::size_t dim = 0;
  std::vector<double> vectors;
  std::vector<TokenId> token_ids;

  std::size_t rows() const { return token_ids.size(); }
  bool empty() const { return token_ids.empty(); }
  std::span<const double> row(std::size_t i) const { return {vectors.data() + i * dim, dim}; }
};

/// Fixed-order dot product; every similarity in the library goes through it
/// so that index scores and direct scores agree bit for bit.
double dot(std::span<const double> a, std::span<const double> b);

/// Element-wise mean of the rows, accumulated in row order.
std::vector<double> mean_rows(const EncodedText& enc);

/// Row i is the embedding of token i on the given side. No pooling.
/// Throws DataError for token ids outside the table.
EncodedText encode(const EmbeddingModel& model, Side side, std::span<const TokenId> token_ids);
inline EncodedText encode(const EmbeddingModel& model, Side side, const TokenSequence& tokens) {
  return encode(model, side, tokens.ids);
}

/// meanRows(q)^T meanRows(p). Throws DataError if either side is empty.
double sim_pooled(const EncodedText& query, const EncodedText& product);

/// sum_i max_j q_i^T p_j. Throws DataError if either side is empty.
double sim_maxsim(const EncodedText& query, const EncodedText& product);

/// Variant-dispatched similarity: max-sim for H1, pooled for DE and SE.
double score(const EmbeddingModel& model, std::span<const TokenId> query,
             std::span<const TokenId> product);
inline double score(const EmbeddingModel& model, const TokenSequence& query,
                    const TokenSequence& product) {
  return score(model, query.ids, product.ids);
}

std::string serialize_model(const EmbeddingModel& model);
EmbeddingModel parse_model(std::string bytes);
void save_model(const EmbeddingModel& model, const std::filesystem::path& path);
EmbeddingModel load_model(const std::filesystem::path& path);

}  // namespace prodsearch
