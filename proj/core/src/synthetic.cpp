#include "prodsearch/synthetic.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <set>
#include <string_view>

#include "prodsearch/errors.hpp"
#include "prodsearch/random.hpp"

namespace prodsearch {
namespace {

constexpr std::array<std::string_view, 36> kBrands = {
    "new balance",   "red barrel studio", "three posts",  "home loft",     "true north",
    "grand river",   "silver lake",       "sun valley",   "oak hill",      "blue ridge",
    "cabin creek",   "ivy bronx",         "union rustic", "mercury row",   "house of hampton",
    "latitude run",  "wade logan",        "birch lane",   "lark manor",    "gracie oaks",
    "andover mills", "zipcode design",    "acme",         "zenith",        "vortex",
    "ebern",         "orren",             "kelly",        "brayden",       "alcott",
    "millwood",      "winston",           "rosdorf",      "symple",        "foundstone",
    "steelside"};

constexpr std::array<std::string_view, 30> kCategories = {
    "chair",   "table",     "sofa",      "lamp",      "rug",      "bed",
    "desk",    "bookshelf", "mirror",    "cabinet",   "stool",    "bench",
    "dresser", "ottoman",   "vanity",    "nightstand", "loveseat", "recliner",
    "sideboard", "headboard", "pendant", "sconce",    "planter",  "curtain",
    "pillow",  "blanket",   "clock",     "shoe rack", "wardrobe", "futon"};

// Deliberately overlaps brand words: new, grand, silver, blue, oak, red, true.
constexpr std::array<std::string_view, 32> kStyles = {
    "new",     "grand",   "silver",  "blue",   "oak",    "red",    "true",    "modern",
    "rustic",  "velvet",  "leather", "walnut", "metal",  "wicker", "outdoor", "vintage",
    "white",   "black",   "gray",    "green",  "linen",  "marble", "glass",   "bamboo",
    "industrial", "farmhouse", "coastal", "tufted", "swivel", "folding", "round", "compact"};

constexpr std::array<std::string_view, 24> kFiller = {
    "perfect", "for",    "any",     "room",     "easy",    "assembly", "durable", "finish",
    "crafted", "with",   "care",    "sturdy",   "frame",   "fits",     "small",   "spaces",
    "classic", "design", "quality", "materials", "comfort", "everyday", "use",     "home"};

struct Attributes {
  std::size_t brand = 0;
  std::size_t category = 0;
  std::size_t style = 0;
  std::size_t style2 = 0;
};

std::string make_title(const Attributes& a) {
  std::string t(kBrands[a.brand]);
  t += ' ';
  t += kStyles[a.style];
  if (a.style2 != a.style) {
    t += ' ';
    t += kStyles[a.style2];
  }
  t += ' ';
  t += kCategories[a.category];
  return t;
}

std::string make_description(const Attributes& a, Rng& rng) {
  std::string d = "this ";
  d += kStyles[a.style];
  d += ' ';
  d += kCategories[a.category];
  const std::size_t n = 4 + rng.below(6);
  for (std::size_t i = 0; i < n; ++i) {
    d += ' ';
    d += kFiller[rng.below(kFiller.size())];
  }
  return d;
}

struct QueryIntent {
  std::optional<std::size_t> brand;
  std::optional<std::size_t> style;
  std::size_t category = 0;

  bool matches(const Attributes& a) const {
    if (a.category != category) return false;
    if (brand && a.brand != *brand) return false;
    if (style && a.style != *style && a.style2 != *style) return false;
    return true;
  }

  std::string text() const {
    std::string t;
    if (brand) t += std::string(kBrands[*brand]) + " ";
    if (style) t += std::string(kStyles[*style]) + " ";
    t += kCategories[category];
    return t;
  }
};

}  // namespace

std::vector<std::string> synthetic_brand_list() {
  std::vector<std::string> out;
  for (auto b : kBrands) {
    if (b.find(' ') != std::string_view::npos) out.emplace_back(b);
  }
  return out;
}

Corpus make_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.products == 0 || spec.queries == 0) {
    throw ConfigError("synthetic corpus needs at least one product and one query");
  }
  Rng rng(spec.seed);

  std::vector<Attributes> attrs;
  std::vector<Product> products;
  attrs.reserve(spec.products);
  products.reserve(spec.products);
  for (std::size_t i = 0; i < spec.products; ++i) {
    Attributes a;
    if (i > 0 && rng.uniform01() < spec.duplicate_title_rate) {
      a = attrs[rng.below(i)];
    } else {
      a.brand = rng.below(kBrands.size());
      a.category = rng.below(kCategories.size());
      a.style = rng.below(kStyles.size());
      a.style2 = rng.uniform01() < 0.5 ? a.style : rng.below(kStyles.size());
    }
    Product p;
    p.id = static_cast<ProductId>(i);
    p.title = make_title(a);
    p.description = make_description(a, rng);
    p.extra_fields.emplace("product_class", std::string(kCategories[a.category]));
    attrs.push_back(a);
    products.push_back(std::move(p));
  }

  std::vector<Query> queries;
  std::vector<RelevanceLabel> labels;
  std::set<std::string> used_texts;
  std::size_t attempts = 0;
  while (queries.size() < spec.queries) {
    if (++attempts > spec.queries * 1000) {
      throw ConfigError("synthetic corpus: cannot generate enough distinct queries with matches");
    }
    // Anchor the query on a real product so it has at least one Exact match.
    const Attributes& anchor = attrs[rng.below(attrs.size())];
    QueryIntent intent;
    intent.category = anchor.category;
    switch (rng.below(4)) {
      case 0: intent.brand = anchor.brand; break;
      case 1: intent.style = anchor.style; break;
      case 2: intent.brand = anchor.brand; intent.style = anchor.style; break;
      default: break;
    }
    std::string text = intent.text();
    if (!used_texts.insert(text).second) continue;

    const QueryId qid = static_cast<QueryId>(queries.size());
    queries.push_back(Query{qid, text});

    std::vector<std::size_t> exact, partial, irrelevant;
    for (std::size_t i = 0; i < attrs.size(); ++i) {
      if (intent.matches(attrs[i])) exact.push_back(i);
      else if (attrs[i].category == intent.category) partial.push_back(i);
      else irrelevant.push_back(i);
    }
    rng.shuffle(std::span(partial));
    rng.shuffle(std::span(irrelevant));
    std::size_t budget = std::max(spec.labels_per_query, exact.size());
    std::vector<RelevanceLabel> judged;
    for (std::size_t i : exact) judged.push_back({qid, products[i].id, Grade::Exact});
    budget -= exact.size();
    const std::size_t n_partial = std::min(partial.size(), budget / 3);
    for (std::size_t k = 0; k < n_partial; ++k) judged.push_back({qid, products[partial[k]].id, Grade::Partial});
    budget -= n_partial;
    const std::size_t n_irr = std::min(irrelevant.size(), budget);
    for (std::size_t k = 0; k < n_irr; ++k) judged.push_back({qid, products[irrelevant[k]].id, Grade::Irrelevant});
    std::sort(judged.begin(), judged.end(),
              [](const RelevanceLabel& a, const RelevanceLabel& b) { return a.product_id < b.product_id; });
    labels.insert(labels.end(), judged.begin(), judged.end());
  }

  return Corpus(std::move(products), std::move(queries), std::move(labels));
}

}  // namespace prodsearch
