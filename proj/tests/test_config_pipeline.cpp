#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <map>
#include <sstream>

#include "prodsearch/config.hpp"
#include "prodsearch/errors.hpp"
#include "prodsearch/pipeline.hpp"
#include "test_util.hpp"

using namespace prodsearch;
namespace fs = std::filesystem;

namespace {

RunConfig small_config(const fs::path& root) {
  SyntheticSpec spec;
  spec.products = 200;
  spec.queries = 12;
  spec.labels_per_query = 40;
  spec.seed = 4;
  RunConfig c;
  c.data = write_synthetic_dataset(spec, root / "data");
  c.brands = root / "data" / "brands.txt";
  c.product_text = ProductTextMode::TitleOnly;
  c.tokenizer = TokenizerKind::BPE;
  c.vocab_size = 200;
  c.dim = 8;
  c.train.epochs = 2;
  c.train.batch_size = 16;
  c.ks = {5, 50};
  c.calibration_fraction = 0.2;
  c.output_dir = root / "out";
  c.seed = 3;
  c.train.seed = 3;
  return c;
}

void run_all_stages(const RunConfig& c) {
  std::ostringstream out, err;
  Console console(out, err);
  cmd_train_tokenizer(c, console);
  cmd_train_encoder(c, console);
  cmd_build_index(c, console);
  cmd_evaluate(c, console);
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = testutil::read_file(e.path());
  }
  return files;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PRODSEARCH_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const RunConfig c;
  EXPECT_EQ(parse_config(c.to_ini()), c);
  EXPECT_EQ(parse_config(""), c);
}

TEST(Config, ModifiedValuesRoundTrip) {
  RunConfig c;
  c.data.products = "p.tsv";
  c.tokenizer = TokenizerKind::Unigram;
  c.brands = "brands.txt";
  c.variant = ModelVariant::SE;
  c.dim = 48;
  c.train.optimizer = OptimizerKind::SGD;
  c.train.learning_rate = 0.125;
  c.gamma = -0.375;
  c.ks = {3, 7, 900};
  c.rescoring = RescoringMode::Exact;
  c.map_form = MapForm::Conventional;
  c.recall_counting = RecallCounting::Products;
  c.grid_dims = {16};
  c.grid_mt = {false};
  c.seed = 77;
  c.train.seed = 77;
  const RunConfig back = parse_config(c.to_ini());
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.to_ini(), c.to_ini());
  ASSERT_TRUE(back.gamma.has_value());
  EXPECT_EQ(*back.gamma, -0.375);
  EXPECT_EQ(back.train.seed, 77u);
}

TEST(Config, RejectsUnknownAndMalformedInput) {
  EXPECT_THROW(parse_config("[model]\nwidth = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[nowhere]\ndim = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[model]\ndim = many\n"), ConfigError);
  EXPECT_THROW(parse_config("[model]\nvariant = cnn\n"), ConfigError);
  EXPECT_THROW(parse_config("dim = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[model\n"), ConfigError);
}

TEST(Config, OverridesApplyInOrder) {
  RunConfig c;
  apply_overrides(c, {"model.dim=32", "model.dim=16", "index.gamma=0.5", "run.seed=9"});
  EXPECT_EQ(c.dim, 16u);
  ASSERT_TRUE(c.gamma.has_value());
  EXPECT_EQ(*c.gamma, 0.5);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_THROW(apply_overrides(c, {"model.dim"}), ConfigError);
  EXPECT_THROW(apply_overrides(c, {"dim=4"}), ConfigError);
  EXPECT_THROW(apply_overrides(c, {"model.depth=4"}), ConfigError);
}

TEST(Config, LoadReadsFileThenOverrides) {
  testutil::TempDir dir;
  testutil::write_file(dir / "run.ini", "[model]\ndim = 24\nvariant = de\n");
  const auto c = load_config(dir / "run.ini", {"model.variant=se"});
  EXPECT_EQ(c.dim, 24u);
  EXPECT_EQ(c.variant, ModelVariant::SE);
  EXPECT_THROW(load_config(dir / "absent.ini"), ConfigError);
  EXPECT_EQ(load_config({}, {}), RunConfig{});
}

TEST(Config, ValidateRejectsOutOfRange) {
  for (const char* o : {"model.dim=0", "tokenizer.vocab_size=0", "index.calibration_fraction=0",
                        "index.calibration_fraction=1.5", "eval.ks=0", "train.batch_size=0"}) {
    RunConfig c;
    apply_overrides(c, {o});
    EXPECT_THROW(c.validate(), ConfigError) << o;
  }
  EXPECT_NO_THROW(RunConfig{}.validate());
}

TEST(Pipeline, RerunIsByteIdentical) {
  testutil::TempDir dir;
  const RunConfig c = small_config(dir.path());
  run_all_stages(c);
  const auto first = snapshot(c.output_dir);
  for (const char* name : {"vocab.tsv", "model.bin", "optimizer.bin", "train_log.tsv", "index.bin",
                           "report_accumulate.tsv", "report_exact.tsv"}) {
    EXPECT_TRUE(first.contains(name)) << name;
  }
  run_all_stages(c);
  EXPECT_TRUE(first == snapshot(c.output_dir));
}

TEST(Pipeline, ArtifactsCarryProvenance) {
  testutil::TempDir dir;
  const RunConfig c = small_config(dir.path());
  run_all_stages(c);
  for (const char* name : {"vocab.tsv", "train_log.tsv"}) {
    EXPECT_NE(testutil::read_file(c.output_dir / name).find("seed = 3"), std::string::npos) << name;
  }
  const std::string report = testutil::read_file(c.report_path(RescoringMode::Accumulate));
  EXPECT_NE(report.find("# config\trun.seed\t3\n"), std::string::npos);
  EXPECT_EQ(load_model(c.model_path()).provenance(), c.provenance());
}

TEST(Pipeline, SeedChangesTheModel) {
  testutil::TempDir a, b;
  RunConfig ca = small_config(a.path());
  RunConfig cb = small_config(b.path());
  apply_overrides(cb, {"run.seed=4"});
  std::ostringstream out, err;
  Console console(out, err);
  for (const auto* c : {&ca, &cb}) {
    cmd_train_tokenizer(*c, console);
    cmd_train_encoder(*c, console);
  }
  EXPECT_FALSE(load_model(ca.model_path()) == load_model(cb.model_path()));
}

TEST(Pipeline, StagesNeedEarlierArtifacts) {
  testutil::TempDir dir;
  const RunConfig c = small_config(dir.path());
  std::ostringstream out, err;
  Console console(out, err);
  EXPECT_THROW(cmd_train_encoder(c, console), DataError);
  cmd_train_tokenizer(c, console);
  EXPECT_THROW(cmd_build_index(c, console), DataError);
}

TEST(Ablation, CellMatchesStandaloneRun) {
  testutil::TempDir dir;
  RunConfig c = small_config(dir.path());
  c.grid_tokenizers = {TokenizerKind::Word, TokenizerKind::BPE};
  c.grid_mt = {true, false};
  c.grid_dims = {8};
  c.grid_variants = {ModelVariant::H1, ModelVariant::DE};
  std::ostringstream out, err;
  Console console(out, err);
  const auto cells = cmd_ablate(c, console);
  ASSERT_EQ(cells.size(), 8u);
  EXPECT_TRUE(fs::exists(c.ablation_path()));
  const Corpus corpus = load_run_corpus(c, console);
  for (const auto& cell : cells) {
    ASSERT_TRUE(cell.error.empty()) << cell.name() << ": " << cell.error;
    const RunConfig cc = ablation_cell_config(c, cell.tokenizer, cell.mt, cell.dim, cell.variant);
    EXPECT_EQ(cc.multi_token(), cell.mt);
    const Vocabulary vocab = train_tokenizer_stage(corpus, cc);
    const TokenizedCorpus data = tokenize_corpus(corpus, vocab, cc.product_text);
    const auto enc = train_encoder_stage(corpus, data, vocab, cc, console);
    const auto idx = build_index_stage(corpus, data, enc.model, vocab, cc);
    const auto report = evaluate_stage(corpus, data, enc.model, idx.index, cc, cc.rescoring);
    ASSERT_EQ(report.summary.size(), cell.summary.size());
    for (std::size_t i = 0; i < report.summary.size(); ++i) {
      EXPECT_EQ(report.summary[i].k, cell.summary[i].k);
      EXPECT_EQ(report.summary[i].precision, cell.summary[i].precision) << cell.name();
      EXPECT_EQ(report.summary[i].recall, cell.summary[i].recall) << cell.name();
      EXPECT_EQ(report.summary[i].map, cell.summary[i].map) << cell.name();
    }
  }
}

TEST(Ablation, MtWithoutBrandListIsAConfigError) {
  testutil::TempDir dir;
  RunConfig c = small_config(dir.path());
  c.brands.clear();
  std::ostringstream out, err;
  Console console(out, err);
  EXPECT_THROW(cmd_ablate(c, console), ConfigError);
}

TEST(Cli, ExitCodes) {
  if (std::string(PRODSEARCH_CLI_PATH).empty()) GTEST_SKIP() << "command line tool not built";
  testutil::TempDir dir;
  const RunConfig c = small_config(dir.path());
  testutil::write_file(dir / "run.ini", c.to_ini());
  const std::string cfg = "--config " + (dir / "run.ini").string() + " ";

  EXPECT_EQ(run_cli(""), CommandStatus::kUsage);
  EXPECT_EQ(run_cli("frobnicate"), CommandStatus::kUsage);
  EXPECT_EQ(run_cli(cfg + "--set model.depth=3 train-tokenizer"), CommandStatus::kUsage);
  EXPECT_EQ(run_cli(cfg + "--set model.dim=0 train-tokenizer"), CommandStatus::kUsage);
  EXPECT_EQ(run_cli(cfg + "--set data.products=" + (dir / "missing.tsv").string() + " train-tokenizer"),
            CommandStatus::kData);
  EXPECT_EQ(run_cli(cfg + "train-encoder"), CommandStatus::kData);

  EXPECT_EQ(run_cli(cfg + "--seed 3 train-tokenizer"), CommandStatus::kOk);
  EXPECT_EQ(run_cli(cfg + "--seed 3 train-encoder"), CommandStatus::kOk);
  EXPECT_EQ(run_cli(cfg + "--seed 3 build-index"), CommandStatus::kOk);
  EXPECT_EQ(run_cli(cfg + "--seed 3 evaluate"), CommandStatus::kOk);
  std::ostringstream out, err;
  Console console(out, err);
  const std::string query = "'" + load_run_corpus(c, console).queries().front().text + "'";
  EXPECT_EQ(run_cli(cfg + "search " + query), CommandStatus::kOk);
  EXPECT_EQ(run_cli(cfg + "search ''"), CommandStatus::kEmptyResult);
  EXPECT_EQ(run_cli(cfg + "search " + query + " --top-k 0"), CommandStatus::kUsage);

  testutil::write_file(c.index_path(), "PSINDEX");
  EXPECT_EQ(run_cli(cfg + "search " + query), CommandStatus::kData);
}
