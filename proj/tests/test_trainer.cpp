#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "prodsearch/errors.hpp"
#include "prodsearch/synthetic.hpp"
#include "prodsearch/tokenized_corpus.hpp"
#include "prodsearch/trainer.hpp"

using namespace prodsearch;
using fixtures::model_from;
using Ids = std::vector<TokenId>;

namespace {

/// Query i holds token i, product 100+i holds token n+i and title `titles[i]`.
TokenizedCorpus diagonal_corpus(std::size_t n, const std::vector<std::string>& titles = {}) {
  TokenizedCorpus data;
  data.vocab_fingerprint = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const ProductId pid = 100 + static_cast<ProductId>(i);
    data.product_pos[pid] = data.product_ids.size();
    data.product_ids.push_back(pid);
    data.product_tokens.push_back({static_cast<TokenId>(n + i)});
    data.product_titles.push_back(titles.empty() ? "title " + std::to_string(i) : titles[i]);
    data.query_tokens[static_cast<QueryId>(i)] = {static_cast<TokenId>(i)};
  }
  return data;
}

std::vector<TrainingPair> diagonal_pairs(std::size_t n) {
  std::vector<TrainingPair> pairs;
  for (std::size_t i = 0; i < n; ++i) pairs.push_back({static_cast<QueryId>(i), 100 + static_cast<ProductId>(i), 1});
  return pairs;
}

/// One-hot rows: query token i and product token n+i both point along axis i.
EmbeddingModel separated_model(ModelVariant variant, std::size_t n, double scale) {
  std::vector<std::vector<double>> rows(2 * n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    rows[i][i] = 1.0;
    rows[n + i][i] = scale;
  }
  return model_from(variant, rows, rows);
}

TrainConfig sgd_config(std::size_t batch, std::size_t epochs) {
  TrainConfig c;
  c.optimizer = OptimizerKind::SGD;
  c.learning_rate = 0.05;
  c.batch_size = batch;
  c.epochs = epochs;
  c.seed = 7;
  return c;
}

}  // namespace

TEST(TripletLoss, Examples) {
  // Single tokens: s+ = 5, s- = 1.
  const auto m = model_from(ModelVariant::H1, {{1, 0}, {0, 0}}, {{5, 0}, {1, 0}});
  EXPECT_EQ(triplet_loss(m, Ids{0}, Ids{0}, Ids{1}, 1.0), 0.0);
  EXPECT_EQ(triplet_loss(m, Ids{0}, Ids{1}, Ids{1}, 1.0), 1.0);
  EXPECT_EQ(triplet_loss(m, Ids{0}, Ids{1}, Ids{0}, 1.0), 5.0);
}

TEST(TripletLoss, HandComputedTwoTokenExample) {
  // q = [e0, e1]; p+ = [(0.5, 0), (0, 0.25)]; p- = [(1, 1)].
  // s+ = 0.5 + 0.25, s- = 1 + 1, loss = 1 - 0.75 + 2.
  const auto m = model_from(ModelVariant::H1, {{1, 0}, {0, 1}, {0, 0}}, {{0.5, 0}, {0, 0.25}, {1, 1}});
  EXPECT_DOUBLE_EQ(triplet_loss(m, Ids{0, 1}, Ids{0, 1}, Ids{2}, 1.0), 2.25);
  // Pooled: mean q = (0.5, 0.5), mean p+ = (0.25, 0.125), s+ = 0.1875; s- = 1.
  const auto de = model_from(ModelVariant::DE, {{1, 0}, {0, 1}, {0, 0}}, {{0.5, 0}, {0, 0.25}, {1, 1}});
  EXPECT_DOUBLE_EQ(triplet_loss(de, Ids{0, 1}, Ids{0, 1}, Ids{2}, 1.0), 1.8125);
}

TEST(TripletLoss, NonNegativeAndClampExact) {
  Rng rng(31);
  for (auto variant : {ModelVariant::H1, ModelVariant::DE, ModelVariant::SE}) {
    for (int i = 0; i < 300; ++i) {
      const auto m = fixtures::random_model(rng, variant, 12, 5);
      const auto q = fixtures::random_ids(rng, 1 + rng.below(3), 12);
      const auto p = fixtures::random_ids(rng, 1 + rng.below(4), 12);
      const auto n = fixtures::random_ids(rng, 1 + rng.below(4), 12);
      const double margin = rng.uniform(0.0, 2.0);
      const double loss = triplet_loss(m, q, p, n, margin);
      EXPECT_GE(loss, 0.0);
      EXPECT_EQ(loss == 0.0, score(m, q, p) - score(m, q, n) >= margin);
    }
  }
  const auto m = model_from(ModelVariant::H1, {{1, 0}}, {{1, 0}});
  EXPECT_THROW(triplet_loss(m, Ids{}, Ids{0}, Ids{0}, 1.0), DataError);
}

TEST(LossGradient, ZeroWhenLossIsZero) {
  const auto m = model_from(ModelVariant::H1, {{1, 0}, {0, 0}}, {{5, 0}, {1, 0}});
  EXPECT_TRUE(loss_gradient(m, Ids{0}, Ids{0}, Ids{1}, 1.0).empty());
}

TEST(LossGradient, SingleTokenByHand) {
  const auto m = model_from(ModelVariant::H1, {{0.3, -0.2}, {0, 0}}, {{0.1, 0.4}, {0.7, 0.5}});
  ASSERT_GT(triplet_loss(m, Ids{0}, Ids{0}, Ids{1}, 1.0), 0.0);
  const auto g = loss_gradient(m, Ids{0}, Ids{0}, Ids{1}, 1.0);
  // dL/dq = p- - p+, dL/dp+ = -q, dL/dp- = q.
  EXPECT_DOUBLE_EQ(g.at(Side::Query, 0, 0), 0.7 - 0.1);
  EXPECT_DOUBLE_EQ(g.at(Side::Query, 0, 1), 0.5 - 0.4);
  EXPECT_DOUBLE_EQ(g.at(Side::Product, 0, 0), -0.3);
  EXPECT_DOUBLE_EQ(g.at(Side::Product, 0, 1), 0.2);
  EXPECT_DOUBLE_EQ(g.at(Side::Product, 1, 0), 0.3);
  EXPECT_DOUBLE_EQ(g.at(Side::Product, 1, 1), -0.2);
}

TEST(LossGradient, MaxsimTiesGoToFirstPosition) {
  // Product tokens 0 and 1 score the same against the query token; token 1 comes first.
  const auto m = model_from(ModelVariant::H1, {{1, 0}, {0, 0}, {0, 0}}, {{1, 0}, {1, 5}, {2, 0}});
  const auto g = loss_gradient(m, Ids{0}, Ids{1, 0}, Ids{2}, 1.0);
  EXPECT_EQ(g.at(Side::Product, 1, 0), -1.0);
  EXPECT_EQ(g.at(Side::Product, 0, 0), 0.0);
  const auto h = loss_gradient(m, Ids{0}, Ids{0, 1}, Ids{2}, 1.0);
  EXPECT_EQ(h.at(Side::Product, 0, 0), -1.0);
  EXPECT_EQ(h.at(Side::Product, 1, 0), 0.0);
}

TEST(LossGradient, MatchesFiniteDifferences) {
  for (auto variant : {ModelVariant::H1, ModelVariant::DE, ModelVariant::SE}) {
    const auto r = gradcheck::run(variant, 100, 1234);
    EXPECT_EQ(r.points, 100u);
    EXPECT_LE(r.max_relative_error, 1e-4) << to_string(variant);
  }
}

TEST(LossGradient, SharedTableAccumulatesBothSides) {
  // The same token on both sides: the gradient of q.p with q = p = e is 2e.
  const auto m = model_from(ModelVariant::SE, {{0.5, 0.25}, {0, 0}}, {});
  const auto g = loss_gradient(m, Ids{0}, Ids{1}, Ids{0}, 1.0);
  EXPECT_DOUBLE_EQ(g.at(Side::Query, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(g.at(Side::Product, 0, 1), 0.5);
}

TEST(Train, SeparatedModelIsUnchanged) {
  const std::size_t n = 6;
  const auto data = diagonal_corpus(n);
  for (auto kind : {OptimizerKind::SGD, OptimizerKind::Adam}) {
    auto model = separated_model(ModelVariant::H1, n, 10.0);
    const auto before = model;
    auto config = sgd_config(4, 2);
    config.optimizer = kind;
    const auto stats = train(model, diagonal_pairs(n), data, config);
    EXPECT_EQ(model, before);
    for (const auto& e : stats.epochs) {
      EXPECT_EQ(e.mean_loss, 0.0);
      EXPECT_EQ(e.zero_loss_fraction, 1.0);
      EXPECT_EQ(e.triplets, n);
    }
  }
}

TEST(Train, DeterministicForFixedSeed) {
  const std::size_t n = 20;
  const auto data = diagonal_corpus(n);
  Rng rng(99);
  const auto init = fixtures::random_model(rng, ModelVariant::H1, 2 * n, 8);
  auto a = init, b = init;
  const auto config = sgd_config(5, 3);
  const auto sa = train(a, diagonal_pairs(n), data, config);
  const auto sb = train(b, diagonal_pairs(n), data, config);
  EXPECT_EQ(a, b);
  EXPECT_EQ(format_training_log(sa, config), format_training_log(sb, config));
  auto c = init;
  auto other = config;
  other.seed = 8;
  train(c, diagonal_pairs(n), data, other);
  EXPECT_NE(a, c);
}

TEST(Train, ToySetLossTrendsDown) {
  const std::size_t n = 20;
  const auto data = diagonal_corpus(n);
  for (auto variant : {ModelVariant::H1, ModelVariant::DE, ModelVariant::SE}) {
    Rng rng(5);
    auto model = fixtures::random_model(rng, variant, 2 * n, 8);
    TrainConfig config;
    config.batch_size = 5;
    config.epochs = 5;
    config.learning_rate = 0.05;
    config.seed = 3;
    const auto stats = train(model, diagonal_pairs(n), data, config);
    ASSERT_EQ(stats.epochs.size(), 5u);
    int upticks = 0;
    for (std::size_t e = 1; e < stats.epochs.size(); ++e) {
      if (stats.epochs[e].mean_loss > stats.epochs[e - 1].mean_loss) ++upticks;
    }
    EXPECT_LE(upticks, 1) << to_string(variant);
    EXPECT_LT(stats.epochs.back().mean_loss, stats.epochs.front().mean_loss) << to_string(variant);
  }
}

TEST(Train, TitleEquivalentNegativesAreSkipped) {
  const auto data = diagonal_corpus(2, {"same title", "same title"});
  auto model = separated_model(ModelVariant::DE, 2, 0.1);
  const auto before = model;
  const auto stats = train(model, diagonal_pairs(2), data, sgd_config(2, 1));
  EXPECT_EQ(stats.epochs[0].triplets, 0u);
  EXPECT_EQ(stats.epochs[0].skipped, 2u);
  EXPECT_EQ(model, before);
}

TEST(Train, NegativePairsOnlyFeedThePool) {
  const auto data = diagonal_corpus(4);
  std::vector<TrainingPair> pairs{{0, 100, 1}, {1, 101, -1}, {2, 102, -1}, {3, 103, -1}};
  auto model = separated_model(ModelVariant::H1, 4, 0.1);
  const auto stats = train(model, pairs, data, sgd_config(4, 1));
  EXPECT_EQ(stats.epochs[0].triplets, 1u);
  EXPECT_EQ(stats.epochs[0].skipped, 0u);
}

TEST(Train, RejectsBadConfig) {
  const auto data = diagonal_corpus(3);
  auto model = separated_model(ModelVariant::H1, 3, 1.0);
  EXPECT_THROW(train(model, diagonal_pairs(3), data, sgd_config(1, 1)), ConfigError);
  auto bad = sgd_config(2, 1);
  bad.learning_rate = 0.0;
  EXPECT_THROW(train(model, diagonal_pairs(3), data, bad), ConfigError);
  std::vector<TrainingPair> dangling{{0, 999, 1}};
  EXPECT_THROW(train(model, dangling, data, sgd_config(2, 1)), DataError);
}

TEST(TrainingLog, HeaderConfigAndRows) {
  TrainStats stats;
  stats.epochs.push_back({1, 0.5, 0.25, 1.0, 8, 0});
  stats.epochs.push_back({2, 0.25, 0.5, 1.0, 8, 1});
  const auto log = format_training_log(stats, TrainConfig{}, "# build_version = x\n");
  EXPECT_EQ(log.rfind("# build_version = x\n", 0), 0u);
  EXPECT_NE(log.find("epoch\tmean_loss\tzero_loss_fraction\ttriplets\tskipped\n"), std::string::npos);
  EXPECT_NE(log.find("\n2\t0.25\t0.5\t8\t1\n"), std::string::npos);
  EXPECT_NE(log.find("margin=1"), std::string::npos);
}

TEST(Optimizer, StateIsDeterministic) {
  const std::size_t n = 8;
  const auto data = diagonal_corpus(n);
  Rng rng(4);
  const auto init = fixtures::random_model(rng, ModelVariant::SE, 2 * n, 4);
  TrainConfig config;
  config.batch_size = 4;
  config.epochs = 2;
  auto a = init, b = init;
  Optimizer oa(config, a), ob(config, b);
  train(a, diagonal_pairs(n), data, config, &oa);
  train(b, diagonal_pairs(n), data, config, &ob);
  EXPECT_EQ(oa.steps(), 4u);
  EXPECT_EQ(oa.serialize(), ob.serialize());
}
