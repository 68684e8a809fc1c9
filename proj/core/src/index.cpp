#include "prodsearch/index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <unordered_map>

#include "prodsearch/binary_io.hpp"
#include "prodsearch/errors.hpp"

namespace prodsearch {
namespace {

constexpr std::string_view kIndexMagic{"PSINDEX\0", 8};
constexpr std::uint32_t kIndexVersion = 1;

bool posting_before(const Posting& a, const Posting& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.product_id < b.product_id;
}

bool item_before(const RetrievedItem& a, const RetrievedItem& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.product_id < b.product_id;
}

}  // namespace

std::size_t TermIndex::total_postings() const {
  std::size_t n = 0;
  for (const auto& [term, list] : postings) n += list.size();
  return n;
}

double TermIndex::mean_list_length() const {
  if (postings.empty()) return 0.0;
  return static_cast<double>(total_postings()) / static_cast<double>(postings.size());
}

void TermIndex::check(const EmbeddingModel& model, const Vocabulary& vocab) const {
  if (vocab.fingerprint() != vocab_fingerprint) {
    throw FingerprintError("index was built with a different vocabulary");
  }
  if (model.fingerprint() != model_fingerprint) {
    throw FingerprintError("index was built with a different model");
  }
}

std::set<TokenId> collect_query_vocab(std::span<const Query> queries, const Vocabulary& vocab) {
  std::set<TokenId> out;
  CachingTokenizer tok(vocab);
  for (const auto& q : queries) {
    for (TokenId id : tok(q.text).ids) out.insert(id);
  }
  return out;
}

TermScorer::TermScorer(const EmbeddingModel& model, const TokenizedCorpus& products)
    : model_(model), product_ids_(products.product_ids) {
  if (products.vocab_fingerprint != model.vocab_fingerprint()) {
    throw FingerprintError("products were tokenized with a different vocabulary than the model");
  }
  unique_tokens_.reserve(products.product_tokens.size());
  for (const auto& tokens : products.product_tokens) {
    for (TokenId id : tokens) {
      if (id >= model.vocab_size()) throw DataError("product token id outside the model vocabulary");
    }
    std::vector<TokenId> u(tokens.begin(), tokens.end());
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    unique_tokens_.push_back(std::move(u));
  }
  if (model.variant() != ModelVariant::H1) {
    product_means_.reserve(products.product_tokens.size());
    for (const auto& tokens : products.product_tokens) {
      if (tokens.empty()) {
        product_means_.emplace_back();
        continue;
      }
      product_means_.push_back(mean_rows(encode(model, Side::Product, tokens)));
    }
  }
}

void TermScorer::score_all(TokenId t, std::vector<double>& out) const {
  out.assign(product_ids_.size(), 0.0);
  const auto q = model_.row(Side::Query, t);
  if (model_.variant() == ModelVariant::H1) {
    const EmbeddingTable& products = model_.table(Side::Product);
    token_sims_.resize(products.rows());
    for (std::size_t v = 0; v < products.rows(); ++v) token_sims_[v] = dot(q, products.row(v));
    for (std::size_t j = 0; j < product_ids_.size(); ++j) {
      const auto& u = unique_tokens_[j];
      if (u.empty()) continue;
      double best = token_sims_[u[0]];
      for (std::size_t k = 1; k < u.size(); ++k) best = std::max(best, token_sims_[u[k]]);
      out[j] = best;
    }
    return;
  }
  for (std::size_t j = 0; j < product_ids_.size(); ++j) {
    if (!unique_tokens_[j].empty()) out[j] = dot(q, product_means_[j]);
  }
}

ThresholdCalibration calibrate_threshold(const TermScorer& scorer, const std::set<TokenId>& query_vocab,
                                         double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("calibration fraction must lie in (0, 1]");
  }
  std::size_t scorable = 0;
  for (std::size_t j = 0; j < scorer.product_count(); ++j) scorable += scorer.scorable(j) ? 1 : 0;

  ThresholdCalibration cal;
  cal.target_postings = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(query_vocab.size()) * static_cast<double>(scorable)));
  // Min-heap holding the K+1 largest scores.
  std::priority_queue<double, std::vector<double>, std::greater<>> top;
  const std::size_t keep = cal.target_postings + 1;
  double mean = 0.0, m2 = 0.0;
  std::size_t count = 0;
  std::vector<double> scores;
  for (TokenId t : query_vocab) {
    scorer.score_all(t, scores);
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (!scorer.scorable(j)) continue;
      const double s = scores[j];
      ++count;
      const double d = s - mean;
      mean += d / static_cast<double>(count);
      m2 += d * (s - mean);
      if (top.size() < keep) {
        top.push(s);
      } else if (s > top.top()) {
        top.pop();
        top.push(s);
      }
    }
  }
  cal.score_count = count;
  cal.score_mean = mean;
  cal.score_stddev = count > 1 ? std::sqrt(m2 / static_cast<double>(count - 1)) : 0.0;
  if (top.size() < keep) {
    cal.gamma = -std::numeric_limits<double>::infinity();
    return cal;
  }

  // Scores tie often (every product holding the best-matching token gets the
  // same max), so the cut at the (K+1)-th score can drop a whole tie group.
  // Keep whichever side of that group lands closer to K.
  const double cut = top.top();
  std::size_t above = 0, at_or_above = 0;
  double below = -std::numeric_limits<double>::infinity();
  for (TokenId t : query_vocab) {
    scorer.score_all(t, scores);
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (!scorer.scorable(j)) continue;
      const double s = scores[j];
      if (s > cut) ++above;
      if (s >= cut) ++at_or_above;
      if (s < cut) below = std::max(below, s);
    }
  }
  const auto distance = [&](std::size_t n) {
    return n > cal.target_postings ? n - cal.target_postings : cal.target_postings - n;
  };
  cal.gamma = distance(at_or_above) < distance(above) ? below : cut;
  return cal;
}

BuildResult build_index(const EmbeddingModel& model, const Vocabulary& vocab,
                        const TokenizedCorpus& products, const std::set<TokenId>& query_vocab,
                        double gamma) {
  model.check_vocab(vocab);
  if (products.vocab_fingerprint != vocab.fingerprint()) {
    throw FingerprintError("products were tokenized with a different vocabulary");
  }
  if (std::isnan(gamma)) throw ConfigError("index threshold must not be NaN");

  BuildResult result;
  TermIndex& index = result.index;
  index.gamma = gamma;
  index.vocab_fingerprint = vocab.fingerprint();
  index.model_fingerprint = model.fingerprint();
  index.product_count = products.product_ids.size();

  const TermScorer scorer(model, products);
  for (std::size_t j = 0; j < scorer.product_count(); ++j) {
    if (!scorer.scorable(j)) {
      result.warnings.push_back("product " + std::to_string(scorer.product_id(j)) +
                                " has no tokens, skipped");
    }
  }
  if (query_vocab.empty()) {
    result.warnings.push_back("query vocabulary is empty, index has no terms");
    return result;
  }

  std::vector<double> scores;
  for (TokenId t : query_vocab) {
    if (t >= model.vocab_size()) throw DataError("query token id outside the model vocabulary");
    scorer.score_all(t, scores);
    std::vector<Posting> list;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (scorer.scorable(j) && scores[j] > gamma) list.push_back({scorer.product_id(j), scores[j]});
    }
    std::sort(list.begin(), list.end(), posting_before);
    index.postings.emplace(t, std::move(list));
  }
  return result;
}

std::string_view to_string(RescoringMode mode) {
  return mode == RescoringMode::Accumulate ? "accumulate" : "exact";
}

RescoringMode parse_rescoring_mode(std::string_view text) {
  if (text == "accumulate") return RescoringMode::Accumulate;
  if (text == "exact") return RescoringMode::Exact;
  throw ConfigError("unknown rescoring mode '" + std::string(text) + "' (expected accumulate or exact)");
}

RetrievalResult retrieve(const TermIndex& index, const EmbeddingModel& model,
                         const TokenizedCorpus& products, std::span<const TokenId> query,
                         RescoringMode mode, std::size_t limit) {
  RetrievalResult result;
  if (query.empty()) {
    result.empty_query = true;
    return result;
  }
  if (model.fingerprint() != index.model_fingerprint) {
    throw FingerprintError("index was built with a different model");
  }

  std::unordered_map<ProductId, double> accumulated;
  std::vector<ProductId> order;  // first-seen order, for deterministic iteration
  for (TokenId t : query) {
    auto it = index.postings.find(t);
    if (it == index.postings.end()) continue;
    for (const Posting& p : it->second) {
      auto [slot, inserted] = accumulated.try_emplace(p.product_id, 0.0);
      if (inserted) order.push_back(p.product_id);
      slot->second += p.score;
    }
  }

  result.items.reserve(order.size());
  if (mode == RescoringMode::Accumulate) {
    for (ProductId id : order) result.items.push_back({id, accumulated[id]});
  } else {
    for (ProductId id : order) {
      const auto& tokens = products.tokens_of_product(id);
      result.items.push_back({id, score(model, query, tokens)});
    }
  }
  std::sort(result.items.begin(), result.items.end(), item_before);
  if (limit > 0 && result.items.size() > limit) result.items.resize(limit);
  return result;
}

std::string serialize_index(const TermIndex& index) {
  BinaryWriter w;
  w.put_bytes(kIndexMagic);
  w.put_u32(kIndexVersion);
  w.put_f64(index.gamma);
  w.put_u64(index.product_count);
  w.put_u64(index.vocab_fingerprint);
  w.put_u64(index.model_fingerprint);
  w.put_string(index.provenance);
  w.put_u32(static_cast<std::uint32_t>(index.postings.size()));
  std::uint64_t offset = 0;
  for (const auto& [term, list] : index.postings) {
    w.put_u32(term);
    w.put_u64(offset);
    w.put_u64(list.size());
    offset += list.size();
  }
  for (const auto& [term, list] : index.postings) {
    for (const Posting& p : list) {
      w.put_i64(p.product_id);
      w.put_f64(p.score);
    }
  }
  return w.bytes();
}

TermIndex parse_index(std::string bytes) {
  BinaryReader r(std::move(bytes), "index file");
  r.expect_magic(kIndexMagic);
  const std::uint32_t version = r.get_u32();
  if (version != kIndexVersion) {
    throw DataError("index file: unsupported version " + std::to_string(version) + ", expected " +
                    std::to_string(kIndexVersion));
  }
  TermIndex index;
  index.gamma = r.get_f64();
  index.product_count = r.get_u64();
  index.vocab_fingerprint = r.get_u64();
  index.model_fingerprint = r.get_u64();
  index.provenance = r.get_string();
  const std::uint32_t terms = r.get_u32();
  std::vector<std::pair<TokenId, std::uint64_t>> directory;
  directory.reserve(terms);
  std::uint64_t expected_offset = 0;
  for (std::uint32_t i = 0; i < terms; ++i) {
    const TokenId term = r.get_u32();
    const std::uint64_t offset = r.get_u64();
    const std::uint64_t count = r.get_u64();
    if (offset != expected_offset) throw DataError("index file: inconsistent term directory");
    if (!directory.empty() && term <= directory.back().first) {
      throw DataError("index file: term directory not sorted");
    }
    expected_offset += count;
    directory.emplace_back(term, count);
  }
  if (r.remaining() / 16 < expected_offset) throw DataError("index file: truncated posting data");
  for (const auto& [term, count] : directory) {
    std::vector<Posting> list;
    list.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
      Posting p;
      p.product_id = r.get_i64();
      p.score = r.get_f64();
      if (!(p.score > index.gamma)) throw DataError("index file: posting score not above threshold");
      if (!list.empty() && !posting_before(list.back(), p)) {
        throw DataError("index file: posting list " + std::to_string(term) + " not strictly ordered");
      }
      list.push_back(p);
    }
    index.postings.emplace(term, std::move(list));
  }
  r.expect_end();
  return index;
}

void save_index(const TermIndex& index, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_index(index));
}

TermIndex load_index(const std::filesystem::path& path) {
  return parse_index(read_file_bytes(path));
}

TermIndex load_index(const std::filesystem::path& path, const EmbeddingModel& model,
                     const Vocabulary& vocab) {
  TermIndex index = load_index(path);
  index.check(model, vocab);
  return index;
}

}  // namespace prodsearch
