#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prodsearch/corpus.hpp"
#include "prodsearch/encoder.hpp"
#include "prodsearch/index.hpp"
#include "prodsearch/metrics.hpp"
#include "prodsearch/tokenizer.hpp"
#include "prodsearch/trainer.hpp"

namespace prodsearch {

/// Everything a pipeline run depends on. Serialized in full into every
/// artifact it produces.
struct RunConfig {
  // [data]
  CorpusPaths data;
  ProductTextMode product_text = ProductTextMode::TitleAndDescription;

  // [tokenizer]
  TokenizerKind tokenizer = TokenizerKind::BPE;
  std::size_t vocab_size = 8000;
  /// One brand per line. Empty path means a non-mt tokenizer.
  std::filesystem::path brands;
  UnigramOptions unigram;

  // [model]
  ModelVariant variant = ModelVariant::H1;
  std::size_t dim = 64;

  // [train]
  TrainConfig train;

  // [index]
  /// Unset means calibrate.
  std::optional<double> gamma;
  double calibration_fraction = 0.01;

  // [eval]
  std::vector<std::size_t> ks{12, 1000};
  RescoringMode rescoring = RescoringMode::Accumulate;
  bool partial_as_relevant = false;
  MapForm map_form = MapForm::MeanPrecision;
  RecallCounting recall_counting = RecallCounting::Classes;

  // [output]
  std::filesystem::path output_dir = "prodsearch-out";

  // [ablate]
  std::vector<TokenizerKind> grid_tokenizers{TokenizerKind::BPE, TokenizerKind::Unigram, TokenizerKind::Word};
  std::vector<bool> grid_mt{true, false};
  std::vector<std::size_t> grid_dims{32, 64, 128};
  std::vector<ModelVariant> grid_variants{ModelVariant::H1, ModelVariant::DE, ModelVariant::SE};

  // [run]
  std::uint64_t seed = 0;

  bool multi_token() const { return !brands.empty(); }

  std::filesystem::path vocab_path() const { return output_dir / "vocab.tsv"; }
  std::filesystem::path model_path() const { return output_dir / "model.bin"; }
  std::filesystem::path optimizer_path() const { return output_dir / "optimizer.bin"; }
  std::filesystem::path training_log_path() const { return output_dir / "train_log.tsv"; }
  std::filesystem::path index_path() const { return output_dir / "index.bin"; }
  std::filesystem::path report_path(RescoringMode mode) const {
    return output_dir / ("report_" + std::string(to_string(mode)) + ".tsv");
  }
  std::filesystem::path ablation_path() const { return output_dir / "ablation.tsv"; }

  /// Throws ConfigError on out-of-range values.
  void validate() const;

  /// Canonical INI text covering every field. parse_config(to_ini()) == *this.
  std::string to_ini() const;

  /// Config text plus build version, embedded into artifacts.
  std::string provenance() const;

  bool operator==(const RunConfig&) const;
};

/// Parses INI text. Unknown sections or keys are ConfigErrors. Missing keys keep defaults.
RunConfig parse_config(std::string_view ini_text);

/// Applies "section.key=value" overrides in order.
void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides);

/// Reads `path` (when non-empty), then applies overrides.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace prodsearch
