#include "prodsearch/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>

#include "prodsearch/errors.hpp"
#include "prodsearch/text.hpp"

namespace prodsearch {
namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::set<std::uint32_t> classes_of(const std::set<ProductId>& ids, const EquivalenceMap& eq) {
  std::set<std::uint32_t> out;
  for (ProductId id : ids) out.insert(eq.class_of(id));
  return out;
}

void check_k(std::size_t k) {
  if (k == 0) throw ConfigError("metric cutoff k must be at least 1");
}

/// hits[i] is true when retrieved[i] matches the ground truth, for i < min(k, size).
std::vector<bool> match_flags(std::span<const ProductId> retrieved, const std::set<std::uint32_t>& truth,
                              const EquivalenceMap& eq, std::size_t k) {
  const std::size_t n = std::min(k, retrieved.size());
  std::vector<bool> hits(n);
  for (std::size_t i = 0; i < n; ++i) hits[i] = truth.contains(eq.class_of(retrieved[i]));
  return hits;
}

struct PreparedQuery {
  std::set<std::uint32_t> truth_classes;
  std::vector<std::uint32_t> truth_product_classes;
  /// Catalog products equivalent to some ground-truth product.
  std::size_t relevant_products = 0;
};

PreparedQuery prepare(const QueryJudgments& judgments, const EquivalenceMap& eq) {
  PreparedQuery p;
  for (ProductId id : judgments.ground_truth) {
    const auto c = eq.class_of(id);
    p.truth_classes.insert(c);
    p.truth_product_classes.push_back(c);
  }
  for (auto c : p.truth_classes) p.relevant_products += eq.class_size(c);
  return p;
}

double precision_from(const std::vector<bool>& hits, std::size_t k) {
  const auto n = static_cast<std::size_t>(std::count(hits.begin(), hits.begin() + std::min(k, hits.size()), true));
  return static_cast<double>(n) / static_cast<double>(k);
}

double map_from(const std::vector<bool>& hits, std::size_t k, MapForm form, std::size_t relevant) {
  double sum = 0.0;
  std::size_t matched = 0;
  for (std::size_t i = 1; i <= k; ++i) {
    const bool hit = i <= hits.size() && hits[i - 1];
    if (hit) ++matched;
    const double p = static_cast<double>(matched) / static_cast<double>(i);
    if (form == MapForm::MeanPrecision) {
      sum += p;
    } else if (hit) {
      sum += p;
    }
  }
  if (form == MapForm::MeanPrecision) return sum / static_cast<double>(k);
  const std::size_t denom = std::min(k, relevant);
  return denom == 0 ? 0.0 : sum / static_cast<double>(denom);
}

double recall_from(std::span<const ProductId> retrieved, const PreparedQuery& q, const EquivalenceMap& eq,
                   std::size_t k, RecallCounting counting) {
  if (q.truth_product_classes.empty()) {
    throw DataError("recall is undefined for a query without ground truth");
  }
  std::set<std::uint32_t> hit;
  const std::size_t n = std::min(k, retrieved.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = eq.class_of(retrieved[i]);
    if (q.truth_classes.contains(c)) hit.insert(c);
  }
  if (counting == RecallCounting::Classes) {
    return static_cast<double>(hit.size()) / static_cast<double>(q.truth_classes.size());
  }
  std::size_t covered = 0;
  for (auto c : q.truth_product_classes) covered += hit.contains(c) ? 1 : 0;
  return static_cast<double>(covered) / static_cast<double>(q.truth_product_classes.size());
}

}  // namespace

EquivalenceMap::EquivalenceMap(std::span<const std::pair<ProductId, std::string>> titles) {
  std::map<std::string, std::vector<ProductId>> by_title;
  for (const auto& [id, title] : titles) by_title[normalize_text(title)].push_back(id);
  std::uint32_t next = 0;
  for (const auto& [title, ids] : by_title) {
    for (ProductId id : ids) {
      if (!classes_.emplace(id, next).second) {
        throw DataError("duplicate product id " + std::to_string(id) + " in equivalence map");
      }
    }
    class_sizes_.push_back(ids.size());
    ++next;
  }
}

EquivalenceMap EquivalenceMap::from_corpus(const Corpus& corpus) {
  std::vector<std::pair<ProductId, std::string>> titles;
  titles.reserve(corpus.products().size());
  for (const auto& p : corpus.products()) titles.emplace_back(p.id, p.title);
  return EquivalenceMap(titles);
}

std::uint32_t EquivalenceMap::class_of(ProductId id) const {
  auto it = classes_.find(id);
  if (it == classes_.end()) {
    throw DataError("product " + std::to_string(id) + " is not in the equivalence map");
  }
  return it->second;
}

JudgmentSet build_judgments(const Corpus& corpus, bool partial_as_relevant) {
  std::map<QueryId, std::set<ProductId>> truth;
  for (const auto& q : corpus.queries()) truth[q.id];
  for (const auto& label : corpus.labels()) {
    if (label.grade == Grade::Exact || (partial_as_relevant && label.grade == Grade::Partial)) {
      truth[label.query_id].insert(label.product_id);
    }
  }
  JudgmentSet out;
  for (auto& [qid, products] : truth) {
    if (products.empty()) {
      out.excluded.push_back(qid);
    } else {
      out.judgments.push_back({qid, std::move(products)});
    }
  }
  return out;
}

std::vector<ProductId> equivalence_match(std::span<const ProductId> a, const std::set<ProductId>& b,
                                         const EquivalenceMap& eq) {
  const auto truth = classes_of(b, eq);
  std::vector<ProductId> out;
  for (ProductId id : a) {
    if (truth.contains(eq.class_of(id))) out.push_back(id);
  }
  return out;
}

double precision_at_k(std::span<const ProductId> retrieved, const QueryJudgments& judgments,
                      const EquivalenceMap& eq, std::size_t k) {
  check_k(k);
  return precision_from(match_flags(retrieved, classes_of(judgments.ground_truth, eq), eq, k), k);
}

double map_at_k(std::span<const ProductId> retrieved, const QueryJudgments& judgments,
                const EquivalenceMap& eq, std::size_t k, MapForm form) {
  check_k(k);
  const PreparedQuery prepared = prepare(judgments, eq);
  const auto hits = match_flags(retrieved, prepared.truth_classes, eq, k);
  return map_from(hits, k, form, prepared.relevant_products);
}

double recall_at_k(std::span<const ProductId> retrieved, const QueryJudgments& judgments,
                   const EquivalenceMap& eq, std::size_t k, RecallCounting counting) {
  check_k(k);
  return recall_from(retrieved, prepare(judgments, eq), eq, k, counting);
}

const SummaryMetrics& EvalReport::at(std::size_t k) const {
  for (const auto& s : summary) {
    if (s.k == k) return s;
  }
  throw std::out_of_range("no summary for k=" + std::to_string(k));
}

EvalReport evaluate(const Run& run, std::span<const QueryJudgments> judgments, const EquivalenceMap& eq,
                    const EvalOptions& options) {
  if (options.ks.empty()) throw ConfigError("at least one metric cutoff is required");
  for (auto k : options.ks) check_k(k);

  EvalReport report;
  report.ks = options.ks;
  std::set<QueryId> judged;
  for (const auto& j : judgments) judged.insert(j.query_id);
  for (const auto& [qid, items] : run) {
    if (!judged.contains(qid)) {
      report.excluded_queries.push_back(qid);
      report.warnings.push_back("query " + std::to_string(qid) + " has no judgments, excluded");
    }
  }

  const std::size_t max_k = *std::max_element(options.ks.begin(), options.ks.end());
  std::vector<const QueryJudgments*> ordered;
  for (const auto& j : judgments) ordered.push_back(&j);
  std::sort(ordered.begin(), ordered.end(),
            [](const QueryJudgments* a, const QueryJudgments* b) { return a->query_id < b->query_id; });

  std::vector<SummaryMetrics> sums(options.ks.size());
  static const std::vector<ProductId> kEmpty;
  for (const QueryJudgments* j : ordered) {
    if (j->ground_truth.empty()) {
      report.excluded_queries.push_back(j->query_id);
      report.warnings.push_back("query " + std::to_string(j->query_id) + " has empty ground truth, excluded");
      continue;
    }
    auto it = run.find(j->query_id);
    if (it == run.end()) {
      report.warnings.push_back("query " + std::to_string(j->query_id) +
                                " missing from the run, scored as an empty retrieval");
    }
    const auto& items = it == run.end() ? kEmpty : it->second;
    const PreparedQuery prepared = prepare(*j, eq);
    const auto hits = match_flags(items, prepared.truth_classes, eq, max_k);
    for (std::size_t ki = 0; ki < options.ks.size(); ++ki) {
      const std::size_t k = options.ks[ki];
      QueryMetrics m;
      m.query_id = j->query_id;
      m.k = k;
      m.precision = precision_from(hits, k);
      m.map = map_from(hits, k, options.map_form, prepared.relevant_products);
      m.recall = recall_from(items, prepared, eq, k, options.recall_counting);
      m.retrieved = std::min(k, items.size());
      sums[ki].precision += m.precision;
      sums[ki].recall += m.recall;
      sums[ki].map += m.map;
      report.rows.push_back(m);
    }
    ++report.evaluated_queries;
  }
  std::sort(report.excluded_queries.begin(), report.excluded_queries.end());
  for (std::size_t ki = 0; ki < options.ks.size(); ++ki) {
    SummaryMetrics s;
    s.k = options.ks[ki];
    if (report.evaluated_queries > 0) {
      const double n = static_cast<double>(report.evaluated_queries);
      s.precision = sums[ki].precision / n;
      s.recall = sums[ki].recall / n;
      s.map = sums[ki].map / n;
    }
    report.summary.push_back(s);
  }
  return report;
}

std::string format_report(const EvalReport& report) {
  std::string out;
  out += "# prodsearch evaluation report\n";
  out += "# reference\tmap@12\t" + format_double(kReferenceMapAt12) + "\n";
  out += "# reference\trecall@1000\t" + format_double(kReferenceRecallAt1k) + "\n";
  for (const auto& [key, value] : report.config) out += "# config\t" + key + "\t" + value + "\n";
  out += "# evaluated_queries\t" + std::to_string(report.evaluated_queries) + "\n";
  out += "# excluded_queries\t" + std::to_string(report.excluded_queries.size()) + "\n";
  out += "query_id\tk\tprecision\trecall\tmap\tretrieved\n";
  for (const auto& r : report.rows) {
    out += std::to_string(r.query_id) + "\t" + std::to_string(r.k) + "\t" + format_double(r.precision) + "\t" +
           format_double(r.recall) + "\t" + format_double(r.map) + "\t" + std::to_string(r.retrieved) + "\n";
  }
  out += "summary\tk\tprecision\trecall\tmap\tqueries\n";
  for (const auto& s : report.summary) {
    out += "summary\t" + std::to_string(s.k) + "\t" + format_double(s.precision) + "\t" +
           format_double(s.recall) + "\t" + format_double(s.map) + "\t" +
           std::to_string(report.evaluated_queries) + "\n";
  }
  return out;
}

}  // namespace prodsearch
