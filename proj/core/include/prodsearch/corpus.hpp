#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace prodsearch {

using ProductId = std::int64_t;
using QueryId = std::int64_t;

struct Product {
  ProductId id = 0;
  std::string title;        // normalized, non-empty
  std::string description;  // normalized, may be empty
  /// Remaining columns of the product file, raw. Not used for scoring.
  std::map<std::string, std::string> extra_fields;

  bool operator==(const Product&) const = default;
};

struct Query {
  QueryId id = 0;
  std::string text;  // normalized, non-empty

  bool operator==(const Query&) const = default;
};

enum class Grade : std::uint8_t { Exact, Partial, Irrelevant };

/// Case-insensitive match against exact / partial / irrelevant.
std::optional<Grade> parse_grade(std::string_view text);
std::string_view to_string(Grade grade);

struct RelevanceLabel {
  QueryId query_id = 0;
  ProductId product_id = 0;
  Grade grade = Grade::Irrelevant;

  bool operator==(const RelevanceLabel&) const = default;
};

/// A training example: target +1 came from an Exact label, -1 from Irrelevant.
struct TrainingPair {
  QueryId query_id = 0;
  ProductId product_id = 0;
  int target = 0;

  bool operator==(const TrainingPair&) const = default;
};

/// Which product fields feed the product encoder.
enum class ProductTextMode : std::uint8_t { TitleAndDescription, TitleOnly };

/// The text a product contributes to tokenizer training and encoding.
std::string product_text(const Product& product, ProductTextMode mode);

/// Immutable product/query/label collection with id lookups.
///
/// Construction validates the record invariants: unique ids, non-empty
/// normalized text, unique (query, product) label pairs that resolve to known
/// records. Violations raise DataError.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<Product> products, std::vector<Query> queries,
         std::vector<RelevanceLabel> labels);

  const std::vector<Product>& products() const { return products_; }
  const std::vector<Query>& queries() const { return queries_; }
  const std::vector<RelevanceLabel>& labels() const { return labels_; }

  const Product* find_product(ProductId id) const;
  const Query* find_query(QueryId id) const;
  /// Throws DataError for unknown ids.
  const Product& product(ProductId id) const;
  const Query& query(QueryId id) const;

 private:
  std::vector<Product> products_;
  std::vector<Query> queries_;
  std::vector<RelevanceLabel> labels_;
  std::unordered_map<ProductId, std::size_t> product_pos_;
  std::unordered_map<QueryId, std::size_t> query_pos_;
};

struct CorpusPaths {
  std::filesystem::path products;
  std::filesystem::path queries;
  std::filesystem::path labels;
};

struct LoadedCorpus {
  Corpus corpus;
  /// Non-fatal problems: dropped rows, empty label file, duplicates.
  std::vector<std::string> warnings;
};

/// Loads three tab-separated files with header rows. Columns are located by
/// header name; the WANDS names (product_name, product_description, query,
/// label) are accepted alongside title, description, text and grade.
///
/// Missing required columns and malformed rows raise DataError naming the
/// column or the file and line number. Labels that reference unknown ids are
/// dropped with a warning.
LoadedCorpus load_corpus(const CorpusPaths& paths);

/// Writes the corpus in the tab-separated layout load_corpus reads, using the
/// WANDS column names.
void write_corpus(const Corpus& corpus, const CorpusPaths& paths);

/// Drops Partial labels, downsamples the majority of Exact/Irrelevant
/// uniformly at random so both classes have equal size, then shuffles. The
/// output is a pure function of (labels, seed).
///
/// Throws DataError when either class is empty.
std::vector<TrainingPair> build_training_pairs(std::span<const RelevanceLabel> labels,
                                               std::uint64_t seed);

/// Heuristic brand-list stand-in read from the raw product file (before
/// normalization): word bigrams in titles and descriptions where both words
/// are capitalized and, in descriptions, the first does not open a sentence.
/// Bigrams found in at
/// least `min_products` products are ranked by product count (ties by
/// surface) and returned normalized, at most `max_terms` of them.
/// All-lowercase catalogs yield an empty list.
std::vector<std::string> suggest_brand_terms(const std::filesystem::path& products_file,
                                             std::size_t max_terms = 50, std::size_t min_products = 3);

}  // namespace prodsearch
