#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "prodsearch/corpus.hpp"
#include "prodsearch/encoder.hpp"
#include "prodsearch/tokenized_corpus.hpp"

namespace prodsearch {

enum class OptimizerKind : std::uint8_t { SGD, Adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view text);

struct TrainConfig {
  double margin = 1.0;  // hinge margin of the triplet loss
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  /// Throws ConfigError for non-positive margin/rate, batch_size < 2, or
  /// Adam betas outside [0, 1).
  void validate() const;
  /// One "key=value" per line, stable order.
  std::string describe() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double zero_loss_fraction = 0.0;
  double seconds = 0.0;
  std::size_t triplets = 0;
  /// Positives with no admissible in-batch negative.
  std::size_t skipped = 0;
};

struct TrainStats {
  std::vector<EpochStats> epochs;
};

/// Gradient rows keyed by (side, token id). For a tied-table model every row
/// is filed under Side::Query, the single shared table.
class SparseGradient {
 public:
  SparseGradient(std::size_t dim, bool tied) : dim_(dim), tied_(tied) {}

  /// row(side, id) += scale * v
  void add(Side side, TokenId id, std::span<const double> v, double scale);
  void merge(const SparseGradient& other);

  bool empty() const { return rows_.empty(); }
  std::size_t dim() const { return dim_; }
  /// Zero for rows that were never touched.
  double at(Side side, TokenId id, std::size_t k) const;
  const std::map<std::pair<Side, TokenId>, std::vector<double>>& rows() const { return rows_; }

 private:
  std::size_t dim_;
  bool tied_;
  std::map<std::pair<Side, TokenId>, std::vector<double>> rows_;
};

/// max(0, margin - score(q, p+) + score(q, p-)).
double triplet_loss(const EmbeddingModel& model, std::span<const TokenId> query,
                    std::span<const TokenId> positive, std::span<const TokenId> negative,
                    double margin);

/// Subgradient of triplet_loss with respect to the embedding tables. Empty
/// unless the loss is strictly positive. H1 routes each query token's
/// gradient through its max-sim argmax product token (lowest index on ties);
/// DE and SE route through the mean pools.
SparseGradient loss_gradient(const EmbeddingModel& model, std::span<const TokenId> query,
                             std::span<const TokenId> positive, std::span<const TokenId> negative,
                             double margin);

/// SGD or dense Adam over the model's tables. Owns the Adam moment estimates.
class Optimizer {
 public:
  Optimizer(const TrainConfig& config, const EmbeddingModel& model);

  void step(EmbeddingModel& model, const SparseGradient& gradient);
  std::uint64_t steps() const { return steps_; }

  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

 private:
  TrainConfig config_;
  std::uint64_t steps_ = 0;
  // Adam first and second moments, one pair per distinct table.
  std::vector<EmbeddingTable> first_;
  std::vector<EmbeddingTable> second_;
};

/// Hook called after each epoch.
using EpochCallback = std::function<void(const EpochStats&)>;

/// Margin-loss training with in-batch random negatives.
///
/// Per epoch the pairs are shuffled and cut into batches. The negative pool of
/// a batch is the set of products of all its pairs; each +1 pair draws one
/// negative uniformly from the pool, redrawing (up to batch_size times) when
/// the draw is the positive itself or shares its normalized title. Pairs with
/// target -1 only feed the pool. The optimizer steps once per batch on the
/// summed subgradient.
TrainStats train(EmbeddingModel& model, std::span<const TrainingPair> pairs,
                 const TokenizedCorpus& data, const TrainConfig& config,
                 Optimizer* optimizer = nullptr, const EpochCallback& on_epoch = {});

/// Tab-separated log: `header` verbatim, a '#' comment block with the config,
/// then one "epoch\tmean_loss\tzero_loss_fraction\ttriplets\tskipped" row per
/// epoch. Wall-clock times are left out so the log is reproducible.
std::string format_training_log(const TrainStats& stats, const TrainConfig& config,
                                std::string_view header = {});

}  // namespace prodsearch
