#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prodsearch/corpus.hpp"

namespace prodsearch {

/// Shape of a generated catalog. Defaults give a desk-scale corpus; set
/// products = 42994 and queries = 480 for a WANDS-sized one.
struct SyntheticSpec {
  std::size_t products = 2000;
  std::size_t queries = 60;
  /// Judged products per query; Exact matches are always judged first.
  std::size_t labels_per_query = 150;
  /// Fraction of products that reuse an earlier product's title.
  double duplicate_title_rate = 0.05;
  std::uint64_t seed = 1;
};

/// Generates a furniture-style catalog with brand, style and category
/// attributes. A query asks for a subset of attributes; products holding all
/// of them are Exact, products sharing the category are Partial, the rest
/// Irrelevant. Several brands span two words and share words with styles
/// ("new balance" vs. "new"), which is what multi-word vocabulary terms are
/// meant to disambiguate.
Corpus make_synthetic_corpus(const SyntheticSpec& spec);

/// The brand names used by the generator, normalized. Serves as the brand
/// list for multi-term tokenizer variants on synthetic data.
std::vector<std::string> synthetic_brand_list();

}  // namespace prodsearch
