#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "fixtures.hpp"
#include "prodsearch/encoder.hpp"
#include "prodsearch/random.hpp"
#include "prodsearch/trainer.hpp"

namespace gradcheck {

using namespace prodsearch;

struct Result {
  std::size_t points = 0;
  std::size_t rejected = 0;
  std::size_t components = 0;
  double max_relative_error = 0.0;
};

/// Smallest gap between the best and second best distinct product token over
/// all query tokens. Infinite when the product has one distinct token.
inline double argmax_gap(const EmbeddingModel& m, const std::vector<TokenId>& q,
                         const std::vector<TokenId>& p) {
  const std::set<TokenId> distinct(p.begin(), p.end());
  double gap = std::numeric_limits<double>::infinity();
  for (TokenId qi : q) {
    std::vector<double> s;
    for (TokenId pj : distinct) s.push_back(dot(m.row(Side::Query, qi), m.row(Side::Product, pj)));
    if (s.size() < 2) continue;
    std::sort(s.rbegin(), s.rend());
    gap = std::min(gap, s[0] - s[1]);
  }
  return gap;
}

/// Relative error with a floor on the denominator, so components that are
/// zero on both sides compare by absolute error.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares loss_gradient with central differences over every table entry at
/// `points` random triplets where the loss exceeds 1e-3 and, for H1, every
/// query token's argmax leads its runner-up by more than 1e-3.
inline Result run(ModelVariant variant, std::size_t points, std::uint64_t seed, double step = 1e-5) {
  Rng rng(seed);
  Result result;
  const std::size_t vocab = 10, dim = 4;
  const double margin = 1.0;
  while (result.points < points) {
    auto model = fixtures::random_model(rng, variant, vocab, dim);
    const auto q = fixtures::random_ids(rng, 1 + rng.below(3), vocab);
    const auto pos = fixtures::random_ids(rng, 1 + rng.below(4), vocab);
    const auto neg = fixtures::random_ids(rng, 1 + rng.below(4), vocab);
    const double loss = triplet_loss(model, q, pos, neg, margin);
    const bool smooth = variant != ModelVariant::H1 ||
                        (argmax_gap(model, q, pos) > 1e-3 && argmax_gap(model, q, neg) > 1e-3);
    if (loss <= 1e-3 || !smooth) {
      ++result.rejected;
      continue;
    }
    const SparseGradient grad = loss_gradient(model, q, pos, neg, margin);
    std::vector<Side> sides{Side::Query};
    if (!model.shares_tables()) sides.push_back(Side::Product);
    for (Side side : sides) {
      for (TokenId id = 0; id < vocab; ++id) {
        for (std::size_t k = 0; k < dim; ++k) {
          double& x = model.table(side).row(id)[k];
          const double saved = x;
          x = saved + step;
          const double up = triplet_loss(model, q, pos, neg, margin);
          x = saved - step;
          const double down = triplet_loss(model, q, pos, neg, margin);
          x = saved;
          const double numeric = (up - down) / (2.0 * step);
          result.max_relative_error =
              std::max(result.max_relative_error, relative_error(grad.at(side, id, k), numeric));
          ++result.components;
        }
      }
    }
    ++result.points;
  }
  return result;
}

}  // namespace gradcheck
