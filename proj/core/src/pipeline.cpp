#include "prodsearch/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "prodsearch/binary_io.hpp"
#include "prodsearch/errors.hpp"
#include "prodsearch/text.hpp"

namespace prodsearch {
namespace {

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_fixed(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::vector<std::pair<std::string, std::string>> config_echo(const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(config.provenance());
  std::string line, section;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    out.emplace_back(section.empty() ? key : section + "." + key, line.substr(eq + 3));
  }
  return out;
}

std::string comment_block(std::string_view text) {
  std::string out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    out += "# ";
    out += text.substr(start, end - start);
    out += "\n";
    start = end + 1;
  }
  return out;
}

std::size_t max_k(const RunConfig& config) { return *std::max_element(config.ks.begin(), config.ks.end()); }

void write_text(const std::filesystem::path& path, const std::string& text) { write_file_bytes(path, text); }

void print_vocab_stats(const Vocabulary& vocab, const TokenizedCorpus& data, Console& console) {
  std::size_t product_tokens = 0, query_tokens = 0, unknown = 0;
  for (const auto& t : data.product_tokens) {
    product_tokens += t.size();
    unknown += static_cast<std::size_t>(std::count(t.begin(), t.end(), kUnkId));
  }
  for (const auto& [qid, t] : data.query_tokens) {
    query_tokens += t.size();
    unknown += static_cast<std::size_t>(std::count(t.begin(), t.end(), kUnkId));
  }
  auto& out = console.out();
  out << "kind\t" << to_string(vocab.kind()) << "\n";
  out << "tokens\t" << vocab.size() << "\n";
  out << "special_terms\t" << vocab.special_terms().size() << "\n";
  out << "merges\t" << vocab.merges().size() << "\n";
  out << "mean_tokens_per_product\t"
      << fmt_fixed(data.product_tokens.empty() ? 0.0
                                               : static_cast<double>(product_tokens) /
                                                     static_cast<double>(data.product_tokens.size()))
      << "\n";
  out << "mean_tokens_per_query\t"
      << fmt_fixed(data.query_tokens.empty()
                       ? 0.0
                       : static_cast<double>(query_tokens) / static_cast<double>(data.query_tokens.size()))
      << "\n";
  out << "unknown_tokens\t" << unknown << "\n";
  out << "fingerprint\t" << std::hex << vocab.fingerprint() << std::dec << "\n";
}

void print_index_stats(const IndexResult& r, Console& console) {
  auto& out = console.out();
  std::vector<std::size_t> lengths;
  for (const auto& [t, list] : r.index.postings) lengths.push_back(list.size());
  std::sort(lengths.begin(), lengths.end());
  auto pct = [&](double q) -> std::size_t {
    if (lengths.empty()) return 0;
    return lengths[static_cast<std::size_t>(q * static_cast<double>(lengths.size() - 1) + 0.5)];
  };
  out << "gamma\t" << fmt(r.index.gamma) << (r.calibration ? "\tcalibrated" : "\tfixed") << "\n";
  if (r.calibration) {
    out << "score_mean\t" << fmt(r.calibration->score_mean) << "\n";
    out << "score_stddev\t" << fmt(r.calibration->score_stddev) << "\n";
  }
  out << "terms\t" << r.index.postings.size() << "\n";
  out << "products\t" << r.index.product_count << "\n";
  out << "postings\t" << r.index.total_postings() << "\n";
  const double mean = r.index.mean_list_length();
  out << "mean_list_length\t" << fmt_fixed(mean, 2) << "\n";
  out << "mean_list_fraction\t"
      << fmt_fixed(r.index.product_count ? mean / static_cast<double>(r.index.product_count) : 0.0, 5) << "\n";
  out << "list_length_min\t" << (lengths.empty() ? 0 : lengths.front()) << "\n";
  out << "list_length_p50\t" << pct(0.5) << "\n";
  out << "list_length_p90\t" << pct(0.9) << "\n";
  out << "list_length_max\t" << (lengths.empty() ? 0 : lengths.back()) << "\n";
}

void print_summary(const EvalReport& report, RescoringMode mode, Console& console) {
  for (const auto& s : report.summary) {
    console.out() << to_string(mode) << "\tk=" << s.k << "\tprecision\t" << fmt_fixed(s.precision) << "\trecall\t"
                  << fmt_fixed(s.recall) << "\tmap\t" << fmt_fixed(s.map) << "\n";
  }
}

struct Artifacts {
  Vocabulary vocab;
  EmbeddingModel model;
};

Artifacts load_model_artifacts(const RunConfig& config) {
  Artifacts a{load_vocab(config.vocab_path()), load_model(config.model_path())};
  a.model.check_vocab(a.vocab);
  return a;
}

/// Both rescoring modes, reports written next to the other artifacts.
std::vector<SummaryMetrics> write_reports(const Corpus& corpus, const TokenizedCorpus& data,
                                          const EmbeddingModel& model, const TermIndex& index,
                                          const RunConfig& config, Console& console) {
  std::vector<SummaryMetrics> chosen;
  for (RescoringMode mode : {RescoringMode::Accumulate, RescoringMode::Exact}) {
    EvalReport report = evaluate_stage(corpus, data, model, index, config, mode);
    for (const auto& w : report.warnings) console.debug(w);
    write_text(config.report_path(mode), format_report(report));
    print_summary(report, mode, console);
    if (mode == config.rescoring) chosen = report.summary;
  }
  return chosen;
}

}  // namespace

void Console::info(std::string_view message) { err_ << message << "\n"; }

void Console::warn(std::string_view message) { err_ << "warning: " << message << "\n"; }

void Console::debug(std::string_view message) {
  if (verbose_) err_ << message << "\n";
}

Corpus load_run_corpus(const RunConfig& config, Console& console) {
  if (config.data.products.empty() || config.data.queries.empty() || config.data.labels.empty()) {
    throw ConfigError("data.products, data.queries and data.labels must all be set");
  }
  LoadedCorpus loaded = load_corpus(config.data);
  for (const auto& w : loaded.warnings) console.warn(w);
  console.debug("loaded " + std::to_string(loaded.corpus.products().size()) + " products, " +
                std::to_string(loaded.corpus.queries().size()) + " queries, " +
                std::to_string(loaded.corpus.labels().size()) + " labels");
  return std::move(loaded.corpus);
}

std::vector<std::string> tokenizer_training_texts(const Corpus& corpus, ProductTextMode mode) {
  std::vector<std::string> texts;
  texts.reserve(corpus.products().size() + corpus.queries().size());
  for (const auto& p : corpus.products()) texts.push_back(product_text(p, mode));
  for (const auto& q : corpus.queries()) texts.push_back(q.text);
  return texts;
}

std::set<std::string> load_brands(const RunConfig& config) {
  if (!config.multi_token()) return {};
  return load_special_terms(config.brands);
}

Vocabulary train_tokenizer_stage(const Corpus& corpus, const RunConfig& config) {
  const auto texts = tokenizer_training_texts(corpus, config.product_text);
  const auto brands = load_brands(config);
  Vocabulary vocab = [&] {
    switch (config.tokenizer) {
      case TokenizerKind::Word:
        return train_word(texts, config.vocab_size, brands);
      case TokenizerKind::BPE:
        return train_bpe(texts, config.vocab_size, brands);
      case TokenizerKind::Unigram:
        return train_unigram(texts, config.vocab_size, brands, config.unigram);
    }
    throw InvariantError("unhandled tokenizer kind");
  }();
  vocab.set_provenance(config.provenance());
  return vocab;
}

EncoderResult train_encoder_stage(const Corpus& corpus, const TokenizedCorpus& data, const Vocabulary& vocab,
                                  const RunConfig& config, Console& console) {
  TrainConfig train_config = config.train;
  train_config.seed = config.seed;
  const auto pairs = build_training_pairs(corpus.labels(), config.seed);
  EncoderResult result{EmbeddingModel::initialize(config.variant, config.dim, vocab, config.seed), {}, {}};
  Optimizer optimizer(train_config, result.model);
  console.debug("training " + std::string(to_string(config.variant)) + " dim " + std::to_string(config.dim) +
                " on " + std::to_string(pairs.size()) + " pairs");
  result.stats = train(result.model, pairs, data, train_config, &optimizer, [&](const EpochStats& e) {
    console.debug("epoch " + std::to_string(e.epoch) + " loss " + fmt_fixed(e.mean_loss, 6) + " zero-loss " +
                  fmt_fixed(e.zero_loss_fraction, 3) + " (" + fmt_fixed(e.seconds, 1) + "s)");
  });
  result.model.set_provenance(config.provenance());
  result.optimizer_state = optimizer.serialize();
  return result;
}

std::string training_log_text(const EncoderResult& result, const RunConfig& config) {
  TrainConfig train_config = config.train;
  train_config.seed = config.seed;
  return format_training_log(result.stats, train_config, comment_block(config.provenance()));
}

IndexResult build_index_stage(const Corpus& corpus, const TokenizedCorpus& data, const EmbeddingModel& model,
                              const Vocabulary& vocab, const RunConfig& config) {
  model.check_vocab(vocab);
  const auto query_vocab = collect_query_vocab(corpus.queries(), vocab);
  IndexResult result;
  double gamma = 0.0;
  if (config.gamma) {
    gamma = *config.gamma;
  } else {
    const TermScorer scorer(model, data);
    result.calibration = calibrate_threshold(scorer, query_vocab, config.calibration_fraction);
    gamma = result.calibration->gamma;
  }
  BuildResult built = build_index(model, vocab, data, query_vocab, gamma);
  result.index = std::move(built.index);
  result.index.provenance = config.provenance();
  result.warnings = std::move(built.warnings);
  return result;
}

Run retrieve_judged(const JudgmentSet& judgments, const TokenizedCorpus& data, const EmbeddingModel& model,
                    const TermIndex& index, RescoringMode mode, std::size_t limit,
                    std::vector<std::string>* warnings) {
  Run run;
  for (const auto& j : judgments.judgments) {
    auto it = data.query_tokens.find(j.query_id);
    if (it == data.query_tokens.end()) throw DataError("query " + std::to_string(j.query_id) + " was not tokenized");
    RetrievalResult r = retrieve(index, model, data, it->second, mode, limit);
    if (r.empty_query && warnings) {
      warnings->push_back("query " + std::to_string(j.query_id) + " has no tokens, empty result");
    }
    auto& ids = run[j.query_id];
    ids.reserve(r.items.size());
    for (const auto& item : r.items) ids.push_back(item.product_id);
  }
  return run;
}

EvalReport evaluate_stage(const Corpus& corpus, const TokenizedCorpus& data, const EmbeddingModel& model,
                          const TermIndex& index, const RunConfig& config, RescoringMode mode) {
  const JudgmentSet judgments = build_judgments(corpus, config.partial_as_relevant);
  const EquivalenceMap eq = EquivalenceMap::from_corpus(corpus);
  std::vector<std::string> warnings;
  const Run run = retrieve_judged(judgments, data, model, index, mode, max_k(config), &warnings);
  EvalOptions options;
  options.ks = config.ks;
  options.map_form = config.map_form;
  options.recall_counting = config.recall_counting;
  EvalReport report = evaluate(run, judgments.judgments, eq, options);
  report.config = config_echo(config);
  report.config.emplace_back("report.rescoring", std::string(to_string(mode)));
  report.config.emplace_back("report.gamma", fmt(index.gamma));
  report.config.emplace_back("report.mt", config.multi_token() ? "true" : "false");
  for (QueryId q : judgments.excluded) {
    report.warnings.push_back("query " + std::to_string(q) + " has no ground truth, excluded");
  }
  report.excluded_queries.insert(report.excluded_queries.end(), judgments.excluded.begin(), judgments.excluded.end());
  std::sort(report.excluded_queries.begin(), report.excluded_queries.end());
  report.warnings.insert(report.warnings.end(), warnings.begin(), warnings.end());
  return report;
}

void cmd_train_tokenizer(const RunConfig& config, Console& console) {
  const Corpus corpus = load_run_corpus(config, console);
  const Vocabulary vocab = train_tokenizer_stage(corpus, config);
  save_vocab(vocab, config.vocab_path());
  print_vocab_stats(vocab, tokenize_corpus(corpus, vocab, config.product_text), console);
  console.info("wrote " + config.vocab_path().string());
}

void cmd_train_encoder(const RunConfig& config, Console& console) {
  const Vocabulary vocab = load_vocab(config.vocab_path());
  const Corpus corpus = load_run_corpus(config, console);
  const TokenizedCorpus data = tokenize_corpus(corpus, vocab, config.product_text);
  const EncoderResult result = train_encoder_stage(corpus, data, vocab, config, console);
  save_model(result.model, config.model_path());
  write_text(config.optimizer_path(), result.optimizer_state);
  write_text(config.training_log_path(), training_log_text(result, config));
  for (const auto& e : result.stats.epochs) {
    console.out() << "epoch\t" << e.epoch << "\tloss\t" << fmt_fixed(e.mean_loss, 6) << "\tzero_loss\t"
                  << fmt_fixed(e.zero_loss_fraction, 4) << "\n";
  }
  console.info("wrote " + config.model_path().string());
}

void cmd_build_index(const RunConfig& config, Console& console) {
  const auto [vocab, model] = load_model_artifacts(config);
  const Corpus corpus = load_run_corpus(config, console);
  const TokenizedCorpus data = tokenize_corpus(corpus, vocab, config.product_text);
  const IndexResult result = build_index_stage(corpus, data, model, vocab, config);
  for (const auto& w : result.warnings) console.warn(w);
  save_index(result.index, config.index_path());
  print_index_stats(result, console);
  console.info("wrote " + config.index_path().string());
}

int cmd_search(const RunConfig& config, std::string_view query_text, std::size_t top_k, Console& console) {
  if (top_k == 0) throw ConfigError("top_k must be at least 1");
  const auto [vocab, model] = load_model_artifacts(config);
  const TermIndex index = load_index(config.index_path(), model, vocab);
  const Corpus corpus = load_run_corpus(config, console);
  const TokenizedCorpus data = tokenize_corpus(corpus, vocab, config.product_text);

  const TokenSequence tokens = tokenize(vocab, normalize_text(query_text));
  if (console.verbose()) {
    std::string shown = std::to_string(tokens.ids.size()) + " query tokens:";
    for (const auto& s : tokens.surfaces) shown += " [" + s + "]";
    console.debug(shown);
  }
  const RetrievalResult result = retrieve(index, model, data, tokens.ids, config.rescoring, top_k);
  if (result.empty_query) console.warn("query has no tokens");
  if (result.items.empty()) return CommandStatus::kEmptyResult;
  std::size_t rank = 1;
  for (const auto& item : result.items) {
    console.out() << rank++ << "\t" << item.product_id << "\t" << data.title_of_product(item.product_id) << "\t"
                  << fmt(item.score) << "\n";
  }
  return CommandStatus::kOk;
}

void cmd_evaluate(const RunConfig& config, Console& console) {
  const auto [vocab, model] = load_model_artifacts(config);
  const TermIndex index = load_index(config.index_path(), model, vocab);
  const Corpus corpus = load_run_corpus(config, console);
  const TokenizedCorpus data = tokenize_corpus(corpus, vocab, config.product_text);
  write_reports(corpus, data, model, index, config, console);
  for (RescoringMode mode : {RescoringMode::Accumulate, RescoringMode::Exact}) {
    console.info("wrote " + config.report_path(mode).string());
  }
}

std::string AblationCell::name() const {
  return std::string(to_string(tokenizer)) + (mt ? "-mt" : "") + "-" + std::to_string(dim) + "-" +
         std::string(to_string(variant));
}

RunConfig ablation_cell_config(const RunConfig& base, TokenizerKind tokenizer, bool mt, std::size_t dim,
                               ModelVariant variant) {
  RunConfig cell = base;
  cell.tokenizer = tokenizer;
  if (!mt) cell.brands.clear();
  cell.dim = dim;
  cell.variant = variant;
  AblationCell named{tokenizer, mt, dim, variant, {}, {}};
  cell.output_dir = base.output_dir / "cells" / named.name();
  return cell;
}

std::vector<AblationCell> cmd_ablate(const RunConfig& config, Console& console) {
  if (config.grid_tokenizers.empty() || config.grid_mt.empty() || config.grid_dims.empty() ||
      config.grid_variants.empty()) {
    throw ConfigError("every ablation axis needs at least one value");
  }
  const bool wants_mt = std::find(config.grid_mt.begin(), config.grid_mt.end(), true) != config.grid_mt.end();
  if (wants_mt && !config.multi_token()) {
    throw ConfigError("ablate.mt includes true but tokenizer.brands is not set");
  }
  const Corpus corpus = load_run_corpus(config, console);

  std::map<std::pair<TokenizerKind, bool>, std::optional<Vocabulary>> vocab_cache;
  std::map<std::pair<TokenizerKind, bool>, std::string> vocab_errors;
  std::vector<AblationCell> cells;
  for (TokenizerKind tok : config.grid_tokenizers) {
    for (bool mt : config.grid_mt) {
      for (std::size_t dim : config.grid_dims) {
        for (ModelVariant variant : config.grid_variants) {
          AblationCell cell{tok, mt, dim, variant, {}, {}};
          const RunConfig cell_config = ablation_cell_config(config, tok, mt, dim, variant);
          console.info("cell " + cell.name());
          try {
            cell_config.validate();
            const auto key = std::make_pair(tok, mt);
            if (!vocab_cache.contains(key) && !vocab_errors.contains(key)) {
              try {
                vocab_cache[key] = train_tokenizer_stage(corpus, cell_config);
              } catch (const std::exception& e) {
                vocab_errors[key] = e.what();
              }
            }
            if (vocab_errors.contains(key)) throw DataError("tokenizer training failed: " + vocab_errors[key]);
            Vocabulary vocab = *vocab_cache[key];
            vocab.set_provenance(cell_config.provenance());
            save_vocab(vocab, cell_config.vocab_path());
            write_text(cell_config.output_dir / "config.ini", cell_config.to_ini());

            const TokenizedCorpus data = tokenize_corpus(corpus, vocab, cell_config.product_text);
            const EncoderResult enc = train_encoder_stage(corpus, data, vocab, cell_config, console);
            save_model(enc.model, cell_config.model_path());
            write_text(cell_config.optimizer_path(), enc.optimizer_state);
            write_text(cell_config.training_log_path(), training_log_text(enc, cell_config));
            const IndexResult idx = build_index_stage(corpus, data, enc.model, vocab, cell_config);
            for (const auto& w : idx.warnings) console.debug(w);
            save_index(idx.index, cell_config.index_path());
            cell.summary = write_reports(corpus, data, enc.model, idx.index, cell_config, console);
          } catch (const std::exception& e) {
            cell.error = e.what();
            console.warn("cell " + cell.name() + " failed: " + cell.error);
          }
          cells.push_back(std::move(cell));
        }
      }
    }
  }
  const std::string table = format_ablation_table(cells, config);
  write_text(config.ablation_path(), table);
  console.out() << table;
  console.info("wrote " + config.ablation_path().string());
  return cells;
}

std::string format_ablation_table(const std::vector<AblationCell>& cells, const RunConfig& config) {
  std::string out = comment_block(config.provenance());
  out += "# reference\tbest_cell\th1\t768\tbpe\tmt\n";
  out += "# reference\tmap@12\t" + fmt(kReferenceMapAt12) + "\n";
  out += "# reference\trecall@1000\t" + fmt(kReferenceRecallAt1k) + "\n";
  out += "# rescoring\t" + std::string(to_string(config.rescoring)) + "\n";

  const std::size_t first_k = config.ks.front();
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!cells[i].error.empty()) continue;
    if (!best || cells[i].summary.front().map > cells[*best].summary.front().map) best = i;
  }

  out += "tokenizer\tmt\tdim\tvariant";
  for (auto k : config.ks) out += "\tmap@" + std::to_string(k) + "\trecall@" + std::to_string(k);
  out += "\tbest\tstatus\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    out += std::string(to_string(c.tokenizer)) + "\t" + (c.mt ? "mt" : "non-mt") + "\t" + std::to_string(c.dim) +
           "\t" + std::string(to_string(c.variant));
    for (std::size_t ki = 0; ki < config.ks.size(); ++ki) {
      if (c.error.empty()) {
        out += "\t" + fmt_fixed(c.summary[ki].map) + "\t" + fmt_fixed(c.summary[ki].recall);
      } else {
        out += "\t-\t-";
      }
    }
    out += best && *best == i ? "\t*" : "\t";
    out += "\t" + (c.error.empty() ? std::string("ok") : "error: " + c.error) + "\n";
  }

  // mt vs non-mt comparison over cells that differ only in the mt flag.
  std::map<std::string, std::pair<double, double>> paired;
  std::map<std::string, std::pair<int, int>> seen;
  for (const auto& c : cells) {
    if (!c.error.empty()) continue;
    const std::string key =
        std::string(to_string(c.tokenizer)) + "-" + std::to_string(c.dim) + "-" + std::string(to_string(c.variant));
    auto& p = paired[key];
    auto& s = seen[key];
    (c.mt ? p.first : p.second) = c.summary.front().map;
    (c.mt ? s.first : s.second) += 1;
  }
  std::size_t pairs = 0, mt_better = 0;
  double mt_sum = 0.0, non_sum = 0.0;
  for (const auto& [key, p] : paired) {
    if (seen[key].first != 1 || seen[key].second != 1) continue;
    ++pairs;
    mt_sum += p.first;
    non_sum += p.second;
    if (p.first > p.second) ++mt_better;
  }
  if (pairs > 0) {
    out += "# observation\tpaired_cells\t" + std::to_string(pairs) + "\n";
    out += "# observation\tmt_better_map@" + std::to_string(first_k) + "\t" + std::to_string(mt_better) + "\n";
    out += "# observation\tmean_map@" + std::to_string(first_k) + "_mt\t" +
           fmt_fixed(mt_sum / static_cast<double>(pairs)) + "\n";
    out += "# observation\tmean_map@" + std::to_string(first_k) + "_non-mt\t" +
           fmt_fixed(non_sum / static_cast<double>(pairs)) + "\n";
  }
  return out;
}

CorpusPaths write_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& dir) {
  const Corpus corpus = make_synthetic_corpus(spec);
  CorpusPaths paths{dir / "products.tsv", dir / "queries.tsv", dir / "labels.tsv"};
  write_corpus(corpus, paths);
  std::string brands;
  for (const auto& b : synthetic_brand_list()) brands += b + "\n";
  write_text(dir / "brands.txt", brands);
  return paths;
}

}  // namespace prodsearch
