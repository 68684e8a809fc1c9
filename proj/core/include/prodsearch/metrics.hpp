#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "prodsearch/corpus.hpp"

namespace prodsearch {

/// Product id -> equivalence class. Two products share a class iff their
/// normalized titles are equal.
class EquivalenceMap {
 public:
  EquivalenceMap() = default;
  /// Titles are normalized before comparison.
  explicit EquivalenceMap(std::span<const std::pair<ProductId, std::string>> titles);
  static EquivalenceMap from_corpus(const Corpus& corpus);

  /// Throws DataError for ids that were never registered.
  std::uint32_t class_of(ProductId id) const;
  bool contains(ProductId id) const { return classes_.contains(id); }
  std::size_t product_count() const { return classes_.size(); }
  std::size_t class_count() const { return class_sizes_.size(); }
  /// Number of registered products in class `cls`.
  std::size_t class_size(std::uint32_t cls) const { return class_sizes_.at(cls); }

 private:
  std::unordered_map<ProductId, std::uint32_t> classes_;
  std::vector<std::size_t> class_sizes_;
};

struct QueryJudgments {
  QueryId query_id = 0;
  std::set<ProductId> ground_truth;
};

struct JudgmentSet {
  std::vector<QueryJudgments> judgments;  // ordered by query id
  std::vector<QueryId> excluded;          // queries with no ground truth
};

/// Ground truth is the Exact-graded products of each query, plus Partial ones
/// when `partial_as_relevant` is set.
JudgmentSet build_judgments(const Corpus& corpus, bool partial_as_relevant = false);

/// The items of `a`, in order, that are equivalent to some product in `b`.
std::vector<ProductId> equivalence_match(std::span<const ProductId> a, const std::set<ProductId>& b,
                                         const EquivalenceMap& eq);

/// Matches in the top k divided by k. Short lists count the missing slots as misses.
double precision_at_k(std::span<const ProductId> retrieved, const QueryJudgments& judgments,
                      const EquivalenceMap& eq, std::size_t k);

enum class MapForm : std::uint8_t {
  /// Mean of P@1 .. P@k.
  MeanPrecision,
  /// Conventional average precision: sum of P@i at matching ranks over
  /// min(k, number of catalog products equivalent to the ground truth).
  /// Not the default.
  Conventional,
};

double map_at_k(std::span<const ProductId> retrieved, const QueryJudgments& judgments,
                const EquivalenceMap& eq, std::size_t k, MapForm form = MapForm::MeanPrecision);

enum class RecallCounting : std::uint8_t {
  /// Ground-truth classes hit in the top k over ground-truth classes.
  Classes,
  /// Ground-truth products whose class is hit over ground-truth products.
  Products,
};

double recall_at_k(std::span<const ProductId> retrieved, const QueryJudgments& judgments,
                   const EquivalenceMap& eq, std::size_t k,
                   RecallCounting counting = RecallCounting::Classes);

struct EvalOptions {
  std::vector<std::size_t> ks{12, 1000};
  MapForm map_form = MapForm::MeanPrecision;
  RecallCounting recall_counting = RecallCounting::Classes;
};

struct QueryMetrics {
  QueryId query_id = 0;
  std::size_t k = 0;
  double precision = 0.0;
  double recall = 0.0;
  double map = 0.0;
  std::size_t retrieved = 0;
};

struct SummaryMetrics {
  std::size_t k = 0;
  double precision = 0.0;
  double recall = 0.0;
  double map = 0.0;
};

/// Best configuration figures reported for the original system, kept as
/// reference constants in every report header.
inline constexpr double kReferenceMapAt12 = 0.561;
inline constexpr double kReferenceRecallAt1k = 0.866;

struct EvalReport {
  /// Ordered key/value echo of the configuration that produced the run.
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::size_t> ks;
  std::vector<QueryMetrics> rows;      // ordered by (query id, k)
  std::vector<SummaryMetrics> summary;  // one per k, unweighted means
  std::size_t evaluated_queries = 0;
  std::vector<QueryId> excluded_queries;
  std::vector<std::string> warnings;

  const SummaryMetrics& at(std::size_t k) const;
};

using Run = std::map<QueryId, std::vector<ProductId>>;

/// Scores every judged query. Run entries without judgments are excluded with
/// a warning; judged queries absent from the run count as empty retrievals.
EvalReport evaluate(const Run& run, std::span<const QueryJudgments> judgments,
                    const EquivalenceMap& eq, const EvalOptions& options = {});

/// Tab-separated report: '#' header lines (reference constants and config
/// echo), a per-query block with columns query_id, k, precision, recall, map,
/// retrieved, then a summary block with columns summary, k, precision, recall,
/// map, queries.
std::string format_report(const EvalReport& report);

}  // namespace prodsearch
