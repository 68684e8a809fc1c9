#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prodsearch/config.hpp"
#include "prodsearch/corpus.hpp"
#include "prodsearch/encoder.hpp"
#include "prodsearch/index.hpp"
#include "prodsearch/metrics.hpp"
#include "prodsearch/synthetic.hpp"
#include "prodsearch/tokenized_corpus.hpp"
#include "prodsearch/tokenizer.hpp"
#include "prodsearch/trainer.hpp"

namespace prodsearch {

/// Results go to `out`; progress, warnings and verbose detail go to `err`.
class Console {
 public:
  Console(std::ostream& out, std::ostream& err, bool verbose = false)
      : out_(out), err_(err), verbose_(verbose) {}

  std::ostream& out() { return out_; }
  bool verbose() const { return verbose_; }
  void info(std::string_view message);
  void warn(std::string_view message);
  void debug(std::string_view message);

 private:
  std::ostream& out_;
  std::ostream& err_;
  bool verbose_;
};

/// Loads the configured corpus, reporting load warnings.
Corpus load_run_corpus(const RunConfig& config, Console& console);

/// Product texts (per the configured text mode) followed by query texts.
std::vector<std::string> tokenizer_training_texts(const Corpus& corpus, ProductTextMode mode);

/// The brand list, or an empty set for non-mt configurations.
std::set<std::string> load_brands(const RunConfig& config);

Vocabulary train_tokenizer_stage(const Corpus& corpus, const RunConfig& config);

struct EncoderResult {
  EmbeddingModel model;
  TrainStats stats;
  /// Serialized optimizer state after the last step.
  std::string optimizer_state;
};

EncoderResult train_encoder_stage(const Corpus& corpus, const TokenizedCorpus& data, const Vocabulary& vocab,
                                  const RunConfig& config, Console& console);

/// The training log with the run provenance as a '#' header.
std::string training_log_text(const EncoderResult& result, const RunConfig& config);

struct IndexResult {
  TermIndex index;
  std::optional<ThresholdCalibration> calibration;
  std::vector<std::string> warnings;
};

IndexResult build_index_stage(const Corpus& corpus, const TokenizedCorpus& data, const EmbeddingModel& model,
                              const Vocabulary& vocab, const RunConfig& config);

/// Retrieves every judged query, cut at the largest configured k.
Run retrieve_judged(const JudgmentSet& judgments, const TokenizedCorpus& data, const EmbeddingModel& model,
                    const TermIndex& index, RescoringMode mode, std::size_t limit,
                    std::vector<std::string>* warnings = nullptr);

EvalReport evaluate_stage(const Corpus& corpus, const TokenizedCorpus& data, const EmbeddingModel& model,
                          const TermIndex& index, const RunConfig& config, RescoringMode mode);

struct CommandStatus {
  static constexpr int kOk = 0;
  static constexpr int kUsage = 1;
  static constexpr int kData = 2;
  static constexpr int kInvariant = 3;
  /// Informational: the search query produced no results.
  static constexpr int kEmptyResult = 4;
};

void cmd_train_tokenizer(const RunConfig& config, Console& console);
void cmd_train_encoder(const RunConfig& config, Console& console);
void cmd_build_index(const RunConfig& config, Console& console);
/// Prints "rank\tproduct_id\ttitle\tscore" lines. Returns kEmptyResult when
/// nothing is retrieved, kOk otherwise.
int cmd_search(const RunConfig& config, std::string_view query_text, std::size_t top_k, Console& console);
void cmd_evaluate(const RunConfig& config, Console& console);

struct AblationCell {
  TokenizerKind tokenizer = TokenizerKind::BPE;
  bool mt = false;
  std::size_t dim = 0;
  ModelVariant variant = ModelVariant::H1;
  /// Empty on success.
  std::string error;
  std::vector<SummaryMetrics> summary;

  std::string name() const;
};

/// The per-cell configuration: the base config with the grid axes applied and
/// a cell-specific output directory.
RunConfig ablation_cell_config(const RunConfig& base, TokenizerKind tokenizer, bool mt, std::size_t dim,
                               ModelVariant variant);

std::vector<AblationCell> cmd_ablate(const RunConfig& config, Console& console);

std::string format_ablation_table(const std::vector<AblationCell>& cells, const RunConfig& config);

/// Writes products.tsv, queries.tsv, labels.tsv and brands.txt into `dir`.
CorpusPaths write_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& dir);

}  // namespace prodsearch
