#include <gtest/gtest.h>

#include <cstdlib>
#include <map>

#include "prodsearch/corpus.hpp"
#include "prodsearch/errors.hpp"
#include "prodsearch/synthetic.hpp"
#include "prodsearch/text.hpp"
#include "test_util.hpp"

using namespace prodsearch;

TEST(NormalizeText, CollapsesCaseAndWhitespace) {
  EXPECT_EQ(normalize_text("New  Balance\tShoes "), "new balance shoes");
  EXPECT_EQ(normalize_text(""), "");
  EXPECT_EQ(normalize_text(" \t\n "), "");
}

TEST(NormalizeText, ComposesCanonically) {
  // "Cafe" + U+0301 COMBINING ACUTE and the precomposed U+00C9 both become U+00E9.
  EXPECT_EQ(normalize_text("Cafe\xCC\x81 CHAIR"), "caf\xC3\xA9 chair");
  EXPECT_EQ(normalize_text("CAF\xC3\x89 CHAIR"), "caf\xC3\xA9 chair");
  EXPECT_EQ(normalize_text("Caf\xC3\xA9 CHAIR"), "caf\xC3\xA9 chair");
}

TEST(NormalizeText, IsIdempotent) {
  for (const char* raw : {"A  b\tC", "\xC3\x84rger  \xC3\x9C", "x\xE2\x80\x83y", "MiXeD Case  "}) {
    const auto once = normalize_text(raw);
    EXPECT_EQ(normalize_text(once), once);
  }
}

TEST(NormalizeText, CollapsesUnicodeSpaces) { EXPECT_EQ(normalize_text("a\xE2\x80\x83\xC2\xA0 b"), "a b"); }

namespace {

CorpusPaths write_fixture(const testutil::TempDir& dir, const std::string& products, const std::string& queries,
                          const std::string& labels) {
  CorpusPaths p{dir / "p.tsv", dir / "q.tsv", dir / "l.tsv"};
  testutil::write_file(p.products, products);
  testutil::write_file(p.queries, queries);
  testutil::write_file(p.labels, labels);
  return p;
}

}  // namespace

TEST(LoadCorpus, DropsDanglingLabelWithWarning) {
  testutil::TempDir dir;
  auto paths = write_fixture(dir, "product_id\tproduct_name\tproduct_description\n1\tRed Chair\tsolid oak\n2\tBlue Table\t\n",
                             "query_id\tquery\n10\tred chair\n",
                             "id\tquery_id\tproduct_id\tlabel\n0\t10\t1\tExact\n1\t10\t2\tIrrelevant\n2\t10\t99\tPartial\n");
  auto loaded = load_corpus(paths);
  EXPECT_EQ(loaded.corpus.labels().size(), 2u);
  ASSERT_EQ(loaded.warnings.size(), 1u);
  EXPECT_NE(loaded.warnings[0].find("line 4"), std::string::npos);
  EXPECT_EQ(loaded.corpus.product(1).title, "red chair");
  EXPECT_EQ(loaded.corpus.product(1).description, "solid oak");
  EXPECT_TRUE(loaded.corpus.product(2).description.empty());
}

TEST(LoadCorpus, ColumnOrderComesFromHeader) {
  testutil::TempDir dir;
  auto paths = write_fixture(dir, "rating\ttitle\tproduct_id\n4.5\tLamp\t7\n", "text\tquery_id\nlamp\t3\n",
                             "grade\tproduct_id\tquery_id\nexact\t7\t3\n");
  auto loaded = load_corpus(paths);
  ASSERT_EQ(loaded.corpus.products().size(), 1u);
  EXPECT_EQ(loaded.corpus.products()[0].id, 7);
  EXPECT_EQ(loaded.corpus.products()[0].extra_fields.at("rating"), "4.5");
  EXPECT_EQ(loaded.corpus.labels()[0].grade, Grade::Exact);
}

TEST(LoadCorpus, EmptyLabelFileWarns) {
  testutil::TempDir dir;
  auto paths = write_fixture(dir, "product_id\ttitle\n1\tx\n", "query_id\tquery\n1\ty\n", "");
  auto loaded = load_corpus(paths);
  EXPECT_TRUE(loaded.corpus.labels().empty());
  EXPECT_EQ(loaded.corpus.products().size(), 1u);
  EXPECT_EQ(loaded.warnings.size(), 1u);
}

TEST(LoadCorpus, MissingColumnNamesIt) {
  testutil::TempDir dir;
  auto paths = write_fixture(dir, "product_id\tdescription\n1\tx\n", "query_id\tquery\n1\ty\n", "");
  try {
    load_corpus(paths);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("title"), std::string::npos) << e.what();
  }
}

TEST(LoadCorpus, MalformedRowNamesLine) {
  testutil::TempDir dir;
  auto paths = write_fixture(dir, "product_id\ttitle\n1\tx\nabc\ty\n", "query_id\tquery\n1\ty\n", "");
  try {
    load_corpus(paths);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadCorpus, GradeIsCaseInsensitive) {
  EXPECT_EQ(parse_grade("EXACT"), Grade::Exact);
  EXPECT_EQ(parse_grade("Partial"), Grade::Partial);
  EXPECT_EQ(parse_grade("irrelevant"), Grade::Irrelevant);
  EXPECT_FALSE(parse_grade("maybe"));
}

TEST(LoadCorpus, RoundTripsThroughWriteCorpus) {
  testutil::TempDir dir;
  SyntheticSpec spec;
  spec.products = 150;
  spec.queries = 8;
  spec.labels_per_query = 30;
  const Corpus original = make_synthetic_corpus(spec);
  CorpusPaths paths{dir / "p.tsv", dir / "q.tsv", dir / "l.tsv"};
  write_corpus(original, paths);
  const auto a = load_corpus(paths);
  const auto b = load_corpus(paths);
  EXPECT_TRUE(a.warnings.empty());
  EXPECT_EQ(a.corpus.products(), original.products());
  EXPECT_EQ(a.corpus.queries(), original.queries());
  EXPECT_EQ(a.corpus.labels(), original.labels());
  EXPECT_EQ(a.corpus.products(), b.corpus.products());
  EXPECT_EQ(a.corpus.labels(), b.corpus.labels());
}

TEST(LoadCorpus, FullWandsCounts) {
  const char* dir = std::getenv("WANDS_DIR");
  if (!dir) GTEST_SKIP() << "WANDS_DIR not set";
  const std::filesystem::path d(dir);
  const auto loaded = load_corpus({d / "product.csv", d / "query.csv", d / "label.csv"});
  EXPECT_EQ(loaded.corpus.products().size(), 42994u);
  EXPECT_EQ(loaded.corpus.queries().size(), 480u);
  EXPECT_EQ(loaded.corpus.labels().size(), 233448u);
}

namespace {

std::vector<RelevanceLabel> make_labels(int exact, int partial, int irrelevant) {
  std::vector<RelevanceLabel> labels;
  ProductId pid = 0;
  for (int i = 0; i < exact; ++i) labels.push_back({1, pid++, Grade::Exact});
  for (int i = 0; i < partial; ++i) labels.push_back({1, pid++, Grade::Partial});
  for (int i = 0; i < irrelevant; ++i) labels.push_back({2, pid++, Grade::Irrelevant});
  return labels;
}

std::map<int, int> target_counts(const std::vector<TrainingPair>& pairs) {
  std::map<int, int> c;
  for (const auto& p : pairs) ++c[p.target];
  return c;
}

}  // namespace

TEST(BuildTrainingPairs, DownsamplesMajority) {
  const auto labels = make_labels(100, 40, 300);
  const auto pairs = build_training_pairs(labels, 7);
  const auto c = target_counts(pairs);
  EXPECT_EQ(c.at(1), 100);
  EXPECT_EQ(c.at(-1), 100);
  EXPECT_EQ(pairs.size(), 200u);
}

TEST(BuildTrainingPairs, KeepsBalancedInput) {
  const auto pairs = build_training_pairs(make_labels(5, 0, 5), 1);
  EXPECT_EQ(pairs.size(), 10u);
}

TEST(BuildTrainingPairs, UnbalanceableIsFatal) {
  EXPECT_THROW(build_training_pairs(make_labels(10, 3, 0), 1), DataError);
  EXPECT_THROW(build_training_pairs(make_labels(0, 3, 4), 1), DataError);
}

TEST(BuildTrainingPairs, DeterministicPerSeedAndTraceable) {
  const auto labels = make_labels(37, 11, 80);
  std::map<std::pair<QueryId, ProductId>, Grade> grade_of;
  for (const auto& l : labels) grade_of[{l.query_id, l.product_id}] = l.grade;
  for (std::uint64_t seed : {0u, 1u, 2u, 99u}) {
    const auto a = build_training_pairs(labels, seed);
    const auto b = build_training_pairs(labels, seed);
    EXPECT_EQ(a, b);
    EXPECT_EQ(target_counts(a), target_counts(build_training_pairs(labels, seed + 1000)));
    for (const auto& p : a) {
      const Grade g = grade_of.at({p.query_id, p.product_id});
      EXPECT_TRUE((p.target == 1 && g == Grade::Exact) || (p.target == -1 && g == Grade::Irrelevant));
    }
  }
  EXPECT_NE(build_training_pairs(labels, 1), build_training_pairs(labels, 2));
}

TEST(Synthetic, DeterministicAndValid) {
  SyntheticSpec spec;
  spec.products = 300;
  spec.queries = 12;
  spec.labels_per_query = 40;
  const Corpus a = make_synthetic_corpus(spec);
  const Corpus b = make_synthetic_corpus(spec);
  EXPECT_EQ(a.products(), b.products());
  EXPECT_EQ(a.labels(), b.labels());
  EXPECT_EQ(a.products().size(), 300u);
  EXPECT_EQ(a.queries().size(), 12u);
  std::map<QueryId, int> exact;
  for (const auto& l : a.labels()) exact[l.query_id] += l.grade == Grade::Exact;
  for (const auto& q : a.queries()) EXPECT_GT(exact[q.id], 0) << "query " << q.id;
  bool multi_word_brand = false;
  for (const auto& b : synthetic_brand_list()) multi_word_brand |= b.find(' ') != std::string::npos;
  EXPECT_TRUE(multi_word_brand);
}

TEST(SuggestBrandTerms, CapitalizedBigramsAcrossProducts) {
  testutil::TempDir dir;
  testutil::write_file(dir / "products.tsv",
                       "product_id\tproduct_name\tproduct_description\n"
                       "1\tNew Balance Trail Shoe\tSoft. Great Value for runs\n"
                       "2\tnew balance road shoe\tBy New Balance, Great Value\n"
                       "3\tOak Chair\tFrom Hill Mills. Great Value\n"
                       "4\tPine Chair\tFrom Hill Mills\n"
                       "5\tRed Sofa\tOak Chair style, Great Value\n");
  const auto terms = suggest_brand_terms(dir / "products.tsv", 10, 2);
  // Two products each: "great value", "hill mills", "new balance". The description-opening
  // "Oak Chair" and the sentence-opening "Great Value" in products 1 and 3 do not count.
  EXPECT_EQ(terms, (std::vector<std::string>{"great value", "hill mills", "new balance"}));
  EXPECT_EQ(suggest_brand_terms(dir / "products.tsv", 1, 2), (std::vector<std::string>{"great value"}));
  EXPECT_TRUE(suggest_brand_terms(dir / "products.tsv", 10, 3).empty());
}
