#include "prodsearch/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "prodsearch/binary_io.hpp"
#include "prodsearch/errors.hpp"
#include "prodsearch/random.hpp"

namespace prodsearch {
namespace {

std::size_t argmax_product_token(const EncodedText& p, std::span<const double> q_row) {
  std::size_t best = 0;
  double best_score = dot(q_row, p.row(0));
  for (std::size_t j = 1; j < p.rows(); ++j) {
    const double s = dot(q_row, p.row(j));
    if (s > best_score) {
      best_score = s;
      best = j;
    }
  }
  return best;
}

/// Adds sign * d score(q, p) / d tables into `grad`.
void accumulate_score_gradient(const EmbeddingModel& model, const EncodedText& q,
                               const EncodedText& p, double sign, SparseGradient& grad) {
  if (model.variant() == ModelVariant::H1) {
    for (std::size_t i = 0; i < q.rows(); ++i) {
      const std::size_t j = argmax_product_token(p, q.row(i));
      grad.add(Side::Query, q.token_ids[i], p.row(j), sign);
      grad.add(Side::Product, p.token_ids[j], q.row(i), sign);
    }
    return;
  }
  const std::vector<double> q_mean = mean_rows(q);
  const std::vector<double> p_mean = mean_rows(p);
  const double inv_m = 1.0 / static_cast<double>(q.rows());
  const double inv_n = 1.0 / static_cast<double>(p.rows());
  for (TokenId id : q.token_ids) grad.add(Side::Query, id, p_mean, sign * inv_m);
  for (TokenId id : p.token_ids) grad.add(Side::Product, id, q_mean, sign * inv_n);
}

double similarity(const EmbeddingModel& model, const EncodedText& q, const EncodedText& p) {
  return model.variant() == ModelVariant::H1 ? sim_maxsim(q, p) : sim_pooled(q, p);
}

/// Returns the loss; adds its subgradient into `grad` when the loss is positive.
double triplet_step(const EmbeddingModel& model, std::span<const TokenId> query,
                    std::span<const TokenId> positive, std::span<const TokenId> negative,
                    double margin, SparseGradient* grad) {
  const EncodedText q = encode(model, Side::Query, query);
  const EncodedText pos = encode(model, Side::Product, positive);
  const EncodedText neg = encode(model, Side::Product, negative);
  const double loss = margin - similarity(model, q, pos) + similarity(model, q, neg);
  if (!(loss > 0.0)) return 0.0;
  if (grad != nullptr) {
    accumulate_score_gradient(model, q, pos, -1.0, *grad);
    accumulate_score_gradient(model, q, neg, +1.0, *grad);
  }
  return loss;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::SGD ? "sgd" : "adam";
}

OptimizerKind parse_optimizer_kind(std::string_view text) {
  if (text == "sgd" || text == "SGD") return OptimizerKind::SGD;
  if (text == "adam" || text == "Adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + std::string(text) + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
  if (!(margin > 0.0)) throw ConfigError("train.margin must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (batch_size < 2) throw ConfigError("train.batch_size must be at least 2 for in-batch negatives");
  if (optimizer == OptimizerKind::Adam) {
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
      throw ConfigError("train.adam betas must lie in [0, 1)");
    }
    if (!(adam_epsilon > 0.0)) throw ConfigError("train.adam_epsilon must be positive");
  }
}

std::string TrainConfig::describe() const {
  std::string out;
  out += "margin=" + format_double(margin) + "\n";
  out += "learning_rate=" + format_double(learning_rate) + "\n";
  out += "batch_size=" + std::to_string(batch_size) + "\n";
  out += "epochs=" + std::to_string(epochs) + "\n";
  out += "seed=" + std::to_string(seed) + "\n";
  out += "optimizer=" + std::string(to_string(optimizer)) + "\n";
  if (optimizer == OptimizerKind::Adam) {
    out += "adam_beta1=" + format_double(adam_beta1) + "\n";
    out += "adam_beta2=" + format_double(adam_beta2) + "\n";
    out += "adam_epsilon=" + format_double(adam_epsilon) + "\n";
  }
  return out;
}

void SparseGradient::add(Side side, TokenId id, std::span<const double> v, double scale) {
  if (tied_) side = Side::Query;
  auto [it, inserted] = rows_.try_emplace({side, id});
  if (inserted) it->second.assign(dim_, 0.0);
  for (std::size_t k = 0; k < dim_; ++k) it->second[k] += scale * v[k];
}

void SparseGradient::merge(const SparseGradient& other) {
  for (const auto& [key, row] : other.rows_) add(key.first, key.second, row, 1.0);
}

double SparseGradient::at(Side side, TokenId id, std::size_t k) const {
  if (tied_) side = Side::Query;
  auto it = rows_.find({side, id});
  return it == rows_.end() ? 0.0 : it->second[k];
}

double triplet_loss(const EmbeddingModel& model, std::span<const TokenId> query,
                    std::span<const TokenId> positive, std::span<const TokenId> negative,
                    double margin) {
  return triplet_step(model, query, positive, negative, margin, nullptr);
}

SparseGradient loss_gradient(const EmbeddingModel& model, std::span<const TokenId> query,
                             std::span<const TokenId> positive, std::span<const TokenId> negative,
                             double margin) {
  SparseGradient grad(model.dim(), model.shares_tables());
  triplet_step(model, query, positive, negative, margin, &grad);
  return grad;
}

Optimizer::Optimizer(const TrainConfig& config, const EmbeddingModel& model) : config_(config) {
  if (config_.optimizer == OptimizerKind::Adam) {
    const std::size_t tables = model.shares_tables() ? 1 : 2;
    for (std::size_t t = 0; t < tables; ++t) {
      first_.emplace_back(model.vocab_size(), model.dim());
      second_.emplace_back(model.vocab_size(), model.dim());
    }
  }
}

void Optimizer::step(EmbeddingModel& model, const SparseGradient& gradient) {
  ++steps_;
  const double lr = config_.learning_rate;
  if (config_.optimizer == OptimizerKind::SGD) {
    for (const auto& [key, row] : gradient.rows()) {
      auto target = model.table(key.first).row(key.second);
      for (std::size_t k = 0; k < row.size(); ++k) target[k] -= lr * row[k];
    }
    return;
  }

  const double b1 = config_.adam_beta1;
  const double b2 = config_.adam_beta2;
  const double eps = config_.adam_epsilon;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t t = 0; t < first_.size(); ++t) {
    const Side side = t == 0 ? Side::Query : Side::Product;
    EmbeddingTable& params = model.table(side);
    auto m = first_[t].data();
    auto v = second_[t].data();
    auto p = params.data();
    const std::size_t dim = params.dim();
    // Dense update: rows without gradient still decay their moments.
    auto next_grad = gradient.rows().lower_bound({side, 0});
    for (std::size_t r = 0; r < params.rows(); ++r) {
      const std::vector<double>* g = nullptr;
      if (next_grad != gradient.rows().end() && next_grad->first.first == side &&
          next_grad->first.second == r) {
        g = &next_grad->second;
        ++next_grad;
      }
      const std::size_t base = r * dim;
      for (std::size_t k = 0; k < dim; ++k) {
        const double gk = g ? (*g)[k] : 0.0;
        const std::size_t i = base + k;
        m[i] = b1 * m[i] + (1.0 - b1) * gk;
        v[i] = b2 * v[i] + (1.0 - b2) * gk * gk;
        p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    }
  }
}

std::string Optimizer::serialize() const {
  BinaryWriter w;
  w.put_bytes(std::string_view("PSOPTIM\0", 8));
  w.put_u32(1);
  w.put_u8(static_cast<std::uint8_t>(config_.optimizer));
  w.put_u64(steps_);
  w.put_u8(static_cast<std::uint8_t>(first_.size()));
  for (std::size_t t = 0; t < first_.size(); ++t) {
    w.put_u64(first_[t].rows());
    w.put_u64(first_[t].dim());
    for (double x : first_[t].data()) w.put_f64(x);
    for (double x : second_[t].data()) w.put_f64(x);
  }
  return w.bytes();
}

void Optimizer::save(const std::filesystem::path& path) const { write_file_bytes(path, serialize()); }

TrainStats train(EmbeddingModel& model, std::span<const TrainingPair> pairs, const TokenizedCorpus& data,
                 const TrainConfig& config, Optimizer* optimizer, const EpochCallback& on_epoch) {
  config.validate();
  if (pairs.empty()) throw DataError("training needs at least one pair");
  if (data.vocab_fingerprint != model.vocab_fingerprint()) {
    throw FingerprintError("training data was tokenized with a different vocabulary than the model");
  }
  for (const auto& pair : pairs) {
    if (!data.query_tokens.contains(pair.query_id) || !data.product_pos.contains(pair.product_id)) {
      throw DataError("training pair (" + std::to_string(pair.query_id) + ", " +
                      std::to_string(pair.product_id) + ") references unknown records");
    }
  }

  Optimizer local_optimizer(config, model);
  Optimizer& opt = optimizer != nullptr ? *optimizer : local_optimizer;
  Rng rng(config.seed);
  std::vector<TrainingPair> order(pairs.begin(), pairs.end());
  TrainStats stats;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    std::size_t triplets = 0, zero = 0, skipped = 0;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<ProductId> pool;
      std::unordered_set<ProductId> in_pool;
      for (std::size_t i = start; i < end; ++i) {
        if (in_pool.insert(order[i].product_id).second) pool.push_back(order[i].product_id);
      }

      SparseGradient grad(model.dim(), model.shares_tables());
      for (std::size_t i = start; i < end; ++i) {
        const TrainingPair& pair = order[i];
        if (pair.target != 1) continue;
        const std::string& pos_title = data.title_of_product(pair.product_id);
        std::optional<ProductId> negative;
        for (std::size_t attempt = 0; attempt < config.batch_size; ++attempt) {
          const ProductId cand = pool[rng.below(pool.size())];
          if (cand != pair.product_id && data.title_of_product(cand) != pos_title) {
            negative = cand;
            break;
          }
        }
        if (!negative) {
          ++skipped;
          continue;
        }
        const auto& q = data.query_tokens.at(pair.query_id);
        const auto& pos = data.tokens_of_product(pair.product_id);
        const auto& neg = data.tokens_of_product(*negative);
        if (q.empty() || pos.empty() || neg.empty()) {
          ++skipped;
          continue;
        }
        const double loss = triplet_step(model, q, pos, neg, config.margin, &grad);
        loss_sum += loss;
        ++triplets;
        if (loss == 0.0) ++zero;
      }
      opt.step(model, grad);
    }

    EpochStats es;
    es.epoch = epoch;
    es.triplets = triplets;
    es.skipped = skipped;
    es.mean_loss = triplets ? loss_sum / static_cast<double>(triplets) : 0.0;
    es.zero_loss_fraction = triplets ? static_cast<double>(zero) / static_cast<double>(triplets) : 1.0;
    es.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    stats.epochs.push_back(es);
    if (on_epoch) on_epoch(es);
  }
  return stats;
}

std::string format_training_log(const TrainStats& stats, const TrainConfig& config,
                                std::string_view header) {
  std::string out(header);
  std::string desc = config.describe();
  std::size_t start = 0;
  while (start < desc.size()) {
    const std::size_t end = desc.find('\n', start);
    out += "# " + desc.substr(start, end - start) + "\n";
    start = end + 1;
  }
  out += "epoch\tmean_loss\tzero_loss_fraction\ttriplets\tskipped\n";
  char buf[160];
  for (const auto& e : stats.epochs) {
    std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\t%zu\t%zu\n", e.epoch, e.mean_loss,
                  e.zero_loss_fraction, e.triplets, e.skipped);
    out += buf;
  }
  return out;
}

}  // namespace prodsearch
