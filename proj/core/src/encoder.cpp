#include "prodsearch/encoder.hpp"

#include <cmath>

#include "prodsearch/binary_io.hpp"
#include "prodsearch/errors.hpp"
#include "prodsearch/hash.hpp"
#include "prodsearch/random.hpp"

namespace prodsearch {
namespace {

constexpr std::string_view kModelMagic{"PSMODEL\0", 8};
constexpr std::uint32_t kModelVersion = 1;

void require_nonempty(const EncodedText& q, const EncodedText& p, std::string_view what) {
  if (q.empty() || p.empty()) {
    throw DataError(std::string(what) + " is undefined for an empty " +
                    (q.empty() ? "query" : "product") + " encoding");
  }
  if (q.dim != p.dim) throw DataError(std::string(what) + ": dimension mismatch");
}

}  // namespace

std::string_view to_string(ModelVariant variant) {
  switch (variant) {
    case ModelVariant::H1: return "h1";
    case ModelVariant::DE: return "de";
    case ModelVariant::SE: return "se";
  }
  return "h1";
}

ModelVariant parse_model_variant(std::string_view text) {
  std::string t(text);
  for (char& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (t == "h1") return ModelVariant::H1;
  if (t == "de") return ModelVariant::DE;
  if (t == "se") return ModelVariant::SE;
  throw ConfigError("unknown model variant '" + std::string(text) + "' (expected h1, de or se)");
}

EmbeddingModel::EmbeddingModel(ModelVariant variant, std::uint64_t vocab_fingerprint,
                               std::uint64_t seed, EmbeddingTable query_table,
                               EmbeddingTable product_table)
    : variant_(variant),
      vocab_fingerprint_(vocab_fingerprint),
      seed_(seed),
      query_(std::move(query_table)),
      product_(std::move(product_table)) {
  if (query_.dim() == 0 || query_.rows() == 0) throw DataError("embedding table must be non-empty");
  if (shares_tables()) {
    if (product_.rows() != 0) throw DataError("SE model takes a single shared table");
  } else if (product_.rows() != query_.rows() || product_.dim() != query_.dim()) {
    throw DataError("query and product tables must have the same shape");
  }
  for (const EmbeddingTable* t : {&query_, &product_}) {
    for (double v : t->data()) {
      if (!std::isfinite(v)) throw DataError("embedding table holds a non-finite value");
    }
  }
}

EmbeddingModel EmbeddingModel::initialize(ModelVariant variant, std::size_t dim,
                                          const Vocabulary& vocab, std::uint64_t seed) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  auto make = [&] {
    EmbeddingTable t(vocab.size(), dim);
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
  };
  EmbeddingTable q = make();
  EmbeddingTable p = variant == ModelVariant::SE ? EmbeddingTable() : make();
  return EmbeddingModel(variant, vocab.fingerprint(), seed, std::move(q), std::move(p));
}

void EmbeddingModel::check_vocab(const Vocabulary& vocab) const {
  if (vocab.fingerprint() != vocab_fingerprint_ || vocab.size() != vocab_size()) {
    throw FingerprintError("model was trained against a different vocabulary (model expects " +
                           std::to_string(vocab_fingerprint_) + ", vocabulary is " +
                           std::to_string(vocab.fingerprint()) + ")");
  }
}

std::uint64_t EmbeddingModel::fingerprint() const {
  Fingerprinter fp;
  fp.update(to_string(variant_));
  fp.update_u64(dim());
  fp.update_u64(vocab_size());
  fp.update_u64(vocab_fingerprint_);
  fp.update_u64(seed_);
  fp.update(query_.data().data(), query_.data().size_bytes());
  fp.update(product_.data().data(), product_.data().size_bytes());
  return fp.digest();
}

bool EmbeddingModel::operator==(const EmbeddingModel& other) const {
  return variant_ == other.variant_ && vocab_fingerprint_ == other.vocab_fingerprint_ &&
         seed_ == other.seed_ && query_ == other.query_ && product_ == other.product_ &&
         provenance_ == other.provenance_;
}

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  const double* x = a.data();
  const double* y = b.data();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += x[i] * y[i];
    s1 += x[i + 1] * y[i + 1];
    s2 += x[i + 2] * y[i + 2];
    s3 += x[i + 3] * y[i + 3];
  }
  for (; i < n; ++i) s0 += x[i] * y[i];
  return (s0 + s1) + (s2 + s3);
}

std::vector<double> mean_rows(const EncodedText& enc) {
  std::vector<double> mean(enc.dim, 0.0);
  for (std::size_t r = 0; r < enc.rows(); ++r) {
    auto row = enc.row(r);
    for (std::size_t k = 0; k < enc.dim; ++k) mean[k] += row[k];
  }
  const double n = static_cast<double>(enc.rows());
  for (double& v : mean) v /= n;
  return mean;
}

EncodedText encode(const EmbeddingModel& model, Side side, std::span<const TokenId> token_ids) {
  const EmbeddingTable& table = model.table(side);
  EncodedText out;
  out.dim = table.dim();
  out.token_ids.assign(token_ids.begin(), token_ids.end());
  out.vectors.reserve(token_ids.size() * table.dim());
  for (TokenId id : token_ids) {
    if (id >= table.rows()) {
      throw DataError("token id " + std::to_string(id) + " is outside the embedding table (" +
                      std::to_string(table.rows()) + " rows)");
    }
    auto row = table.row(id);
    out.vectors.insert(out.vectors.end(), row.begin(), row.end());
  }
  return out;
}

double sim_pooled(const EncodedText& query, const EncodedText& product) {
  require_nonempty(query, product, "pooled similarity");
  return dot(mean_rows(query), mean_rows(product));
}

double sim_maxsim(const EncodedText& query, const EncodedText& product) {
  require_nonempty(query, product, "max-sim similarity");
  double total = 0.0;
  for (std::size_t i = 0; i < query.rows(); ++i) {
    double best = dot(query.row(i), product.row(0));
    for (std::size_t j = 1; j < product.rows(); ++j) best = std::max(best, dot(query.row(i), product.row(j)));
    total += best;
  }
  return total;
}

double score(const EmbeddingModel& model, std::span<const TokenId> query,
             std::span<const TokenId> product) {
  const EncodedText q = encode(model, Side::Query, query);
  const EncodedText p = encode(model, Side::Product, product);
  return model.variant() == ModelVariant::H1 ? sim_maxsim(q, p) : sim_pooled(q, p);
}

std::string serialize_model(const EmbeddingModel& model) {
  BinaryWriter w;
  w.put_bytes(kModelMagic);
  w.put_u32(kModelVersion);
  w.put_u8(static_cast<std::uint8_t>(model.variant()));
  w.put_u32(static_cast<std::uint32_t>(model.dim()));
  w.put_u64(model.vocab_size());
  w.put_u64(model.vocab_fingerprint());
  w.put_u64(model.seed());
  w.put_string(model.provenance());
  const std::uint8_t n_tables = model.shares_tables() ? 1 : 2;
  w.put_u8(n_tables);
  for (Side side : {Side::Query, Side::Product}) {
    if (side == Side::Product && model.shares_tables()) break;
    for (double v : model.table(side).data()) w.put_f64(v);
  }
  return w.bytes();
}

EmbeddingModel parse_model(std::string bytes) {
  BinaryReader r(std::move(bytes), "model file");
  r.expect_magic(kModelMagic);
  const std::uint32_t version = r.get_u32();
  if (version != kModelVersion) {
    throw DataError("model file: unsupported version " + std::to_string(version) + ", expected " +
                    std::to_string(kModelVersion));
  }
  const std::uint8_t variant_tag = r.get_u8();
  if (variant_tag > static_cast<std::uint8_t>(ModelVariant::SE)) {
    throw DataError("model file: unknown variant tag " + std::to_string(variant_tag));
  }
  const auto variant = static_cast<ModelVariant>(variant_tag);
  const std::uint32_t dim = r.get_u32();
  const std::uint64_t rows = r.get_u64();
  const std::uint64_t vocab_fp = r.get_u64();
  const std::uint64_t seed = r.get_u64();
  std::string provenance = r.get_string();
  const std::uint8_t n_tables = r.get_u8();
  const std::uint8_t expected_tables = variant == ModelVariant::SE ? 1 : 2;
  if (n_tables != expected_tables) {
    throw DataError("model file: variant " + std::string(to_string(variant)) + " needs " +
                    std::to_string(expected_tables) + " tables, header says " + std::to_string(n_tables));
  }
  if (dim == 0 || rows == 0 || r.remaining() / 8 / dim / rows < n_tables) {
    throw DataError("model file: truncated table data");
  }
  auto read_table = [&] {
    EmbeddingTable t(rows, dim);
    for (double& v : t.data()) v = r.get_f64();
    return t;
  };
  EmbeddingTable q = read_table();
  EmbeddingTable p = n_tables == 2 ? read_table() : EmbeddingTable();
  r.expect_end();
  EmbeddingModel model(variant, vocab_fp, seed, std::move(q), std::move(p));
  model.set_provenance(std::move(provenance));
  return model;
}

void save_model(const EmbeddingModel& model, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_model(model));
}

EmbeddingModel load_model(const std::filesystem::path& path) {
  return parse_model(read_file_bytes(path));
}

}  // namespace prodsearch
