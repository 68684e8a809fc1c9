#pragma once

#include <cstdint>
#include <vector>

#include "prodsearch/encoder.hpp"
#include "prodsearch/random.hpp"

namespace fixtures {

using prodsearch::EmbeddingModel;
using prodsearch::EmbeddingTable;
using prodsearch::ModelVariant;
using prodsearch::TokenId;

inline EmbeddingTable table_from(const std::vector<std::vector<double>>& rows) {
  EmbeddingTable t(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t k = 0; k < rows[r].size(); ++k) t.row(r)[k] = rows[r][k];
  }
  return t;
}

/// Model with the given rows. SE ignores `product_rows`.
inline EmbeddingModel model_from(ModelVariant variant, const std::vector<std::vector<double>>& query_rows,
                                 const std::vector<std::vector<double>>& product_rows,
                                 std::uint64_t vocab_fingerprint = 1) {
  return EmbeddingModel(variant, vocab_fingerprint, 0, table_from(query_rows),
                        variant == ModelVariant::SE ? EmbeddingTable{} : table_from(product_rows));
}

inline EmbeddingTable random_table(prodsearch::Rng& rng, std::size_t rows, std::size_t dim) {
  EmbeddingTable t(rows, dim);
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

inline EmbeddingModel random_model(prodsearch::Rng& rng, ModelVariant variant, std::size_t rows,
                                   std::size_t dim, std::uint64_t vocab_fingerprint = 1) {
  EmbeddingTable q = random_table(rng, rows, dim);
  EmbeddingTable p = variant == ModelVariant::SE ? EmbeddingTable{} : random_table(rng, rows, dim);
  return EmbeddingModel(variant, vocab_fingerprint, 0, std::move(q), std::move(p));
}

inline std::vector<TokenId> random_ids(prodsearch::Rng& rng, std::size_t count, std::size_t vocab) {
  std::vector<TokenId> ids(count);
  for (auto& id : ids) id = static_cast<TokenId>(rng.below(vocab));
  return ids;
}

/// Rows of a table as a plain matrix, for the oracles.
inline std::vector<std::vector<double>> rows_of(const EmbeddingModel& model, prodsearch::Side side,
                                                const std::vector<TokenId>& ids) {
  std::vector<std::vector<double>> out;
  for (TokenId id : ids) {
    auto r = model.row(side, id);
    out.emplace_back(r.begin(), r.end());
  }
  return out;
}

}  // namespace fixtures
