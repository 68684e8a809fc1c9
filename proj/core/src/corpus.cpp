#include "prodsearch/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include "prodsearch/errors.hpp"
#include "prodsearch/random.hpp"
#include "prodsearch/text.hpp"

namespace prodsearch {
namespace {

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = line.find('\t', start);
    if (end == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, end - start));
    start = end + 1;
  }
  return fields;
}

/// One tab-separated file: header plus data rows tagged with 1-based line numbers.
class TsvTable {
 public:
  TsvTable(const std::filesystem::path& path, std::string label)
      : path_(path), label_(std::move(label)) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + label_ + " file " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line_no == 1) {
        for (auto field : split_tabs(line)) header_.push_back(lower_ascii(trim(field)));
        continue;
      }
      if (line.empty()) continue;
      rows_.emplace_back(line_no, std::move(line));
    }
  }

  bool empty_file() const { return header_.empty(); }
  const std::vector<std::string>& header() const { return header_; }

  std::optional<std::size_t> find_column(std::initializer_list<std::string_view> names) const {
    for (auto name : names) {
      auto it = std::find(header_.begin(), header_.end(), name);
      if (it != header_.end()) return static_cast<std::size_t>(it - header_.begin());
    }
    return std::nullopt;
  }

  std::size_t require_column(std::initializer_list<std::string_view> names) const {
    if (auto col = find_column(names)) return *col;
    throw DataError(label_ + " file " + path_.string() + ": missing required column '" +
                    std::string(*names.begin()) + "'");
  }

  /// Calls fn(line_no, fields) for each data row. Rows with more fields than
  /// the header are malformed; shorter rows are padded with empty fields.
  template <typename Fn>
  void for_each_row(Fn&& fn) const {
    for (const auto& [line_no, line] : rows_) {
      auto fields = split_tabs(line);
      if (fields.size() > header_.size()) {
        fail(line_no, "expected " + std::to_string(header_.size()) + " fields, found " +
                          std::to_string(fields.size()));
      }
      fields.resize(header_.size(), std::string_view{});
      fn(line_no, fields);
    }
  }

  [[noreturn]] void fail(std::size_t line_no, const std::string& why) const {
    throw DataError(label_ + " file " + path_.string() + ": line " + std::to_string(line_no) +
                    ": " + why);
  }

  std::int64_t parse_id(std::size_t line_no, std::string_view field, std::string_view column) const {
    field = trim(field);
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty()) {
      fail(line_no, "column '" + std::string(column) + "' is not an integer: '" +
                        std::string(field) + "'");
    }
    return value;
  }

  std::size_t row_count() const { return rows_.size(); }

 private:
  std::filesystem::path path_;
  std::string label_;
  std::vector<std::string> header_;
  std::vector<std::pair<std::size_t, std::string>> rows_;
};

}  // namespace

std::optional<Grade> parse_grade(std::string_view text) {
  const std::string g = lower_ascii(trim(text));
  if (g == "exact") return Grade::Exact;
  if (g == "partial") return Grade::Partial;
  if (g == "irrelevant") return Grade::Irrelevant;
  return std::nullopt;
}

std::string_view to_string(Grade grade) {
  switch (grade) {
    case Grade::Exact: return "Exact";
    case Grade::Partial: return "Partial";
    case Grade::Irrelevant: return "Irrelevant";
  }
  return "Irrelevant";
}

std::string product_text(const Product& product, ProductTextMode mode) {
  if (mode == ProductTextMode::TitleOnly || product.description.empty()) return product.title;
  return product.title + " " + product.description;
}

Corpus::Corpus(std::vector<Product> products, std::vector<Query> queries,
               std::vector<RelevanceLabel> labels)
    : products_(std::move(products)), queries_(std::move(queries)), labels_(std::move(labels)) {
  product_pos_.reserve(products_.size());
  for (std::size_t i = 0; i < products_.size(); ++i) {
    const Product& p = products_[i];
    if (p.title.empty()) throw DataError("product " + std::to_string(p.id) + " has an empty title");
    if (!product_pos_.emplace(p.id, i).second) {
      throw DataError("duplicate product_id " + std::to_string(p.id));
    }
  }
  query_pos_.reserve(queries_.size());
  for (std::size_t i = 0; i < queries_.size(); ++i) {
    const Query& q = queries_[i];
    if (q.text.empty()) throw DataError("query " + std::to_string(q.id) + " has empty text");
    if (!query_pos_.emplace(q.id, i).second) {
      throw DataError("duplicate query_id " + std::to_string(q.id));
    }
  }
  std::set<std::pair<QueryId, ProductId>> seen;
  for (const auto& label : labels_) {
    if (!find_query(label.query_id) || !find_product(label.product_id)) {
      throw DataError("label (" + std::to_string(label.query_id) + ", " +
                      std::to_string(label.product_id) + ") references an unknown record");
    }
    if (!seen.emplace(label.query_id, label.product_id).second) {
      throw DataError("duplicate label for (" + std::to_string(label.query_id) + ", " +
                      std::to_string(label.product_id) + ")");
    }
  }
}

const Product* Corpus::find_product(ProductId id) const {
  auto it = product_pos_.find(id);
  return it == product_pos_.end() ? nullptr : &products_[it->second];
}

const Query* Corpus::find_query(QueryId id) const {
  auto it = query_pos_.find(id);
  return it == query_pos_.end() ? nullptr : &queries_[it->second];
}

const Product& Corpus::product(ProductId id) const {
  if (const Product* p = find_product(id)) return *p;
  throw DataError("unknown product_id " + std::to_string(id));
}

const Query& Corpus::query(QueryId id) const {
  if (const Query* q = find_query(id)) return *q;
  throw DataError("unknown query_id " + std::to_string(id));
}

LoadedCorpus load_corpus(const CorpusPaths& paths) {
  std::vector<std::string> warnings;

  TsvTable product_table(paths.products, "products");
  if (product_table.empty_file()) throw DataError("products file " + paths.products.string() + " is empty");
  const std::size_t pid_col = product_table.require_column({"product_id"});
  const std::size_t title_col = product_table.require_column({"title", "product_name"});
  const auto desc_col = product_table.find_column({"description", "product_description"});

  std::vector<Product> products;
  products.reserve(product_table.row_count());
  std::set<ProductId> product_ids;
  product_table.for_each_row([&](std::size_t line_no, const std::vector<std::string_view>& f) {
    Product p;
    p.id = product_table.parse_id(line_no, f[pid_col], "product_id");
    if (!product_ids.insert(p.id).second) {
      product_table.fail(line_no, "duplicate product_id " + std::to_string(p.id));
    }
    p.title = normalize_text(f[title_col]);
    if (desc_col) p.description = normalize_text(f[*desc_col]);
    for (std::size_t c = 0; c < f.size(); ++c) {
      if (c == pid_col || c == title_col || (desc_col && c == *desc_col)) continue;
      p.extra_fields.emplace(product_table.header()[c], std::string(f[c]));
    }
    if (p.title.empty()) {
      warnings.push_back("products line " + std::to_string(line_no) + ": product " +
                         std::to_string(p.id) + " has an empty title, dropped");
      return;
    }
    products.push_back(std::move(p));
  });

  TsvTable query_table(paths.queries, "queries");
  if (query_table.empty_file()) throw DataError("queries file " + paths.queries.string() + " is empty");
  const std::size_t qid_col = query_table.require_column({"query_id"});
  const std::size_t text_col = query_table.require_column({"text", "query"});
  std::vector<Query> queries;
  std::set<QueryId> query_ids;
  query_table.for_each_row([&](std::size_t line_no, const std::vector<std::string_view>& f) {
    Query q;
    q.id = query_table.parse_id(line_no, f[qid_col], "query_id");
    if (!query_ids.insert(q.id).second) {
      query_table.fail(line_no, "duplicate query_id " + std::to_string(q.id));
    }
    q.text = normalize_text(f[text_col]);
    if (q.text.empty()) {
      warnings.push_back("queries line " + std::to_string(line_no) + ": query " +
                         std::to_string(q.id) + " has empty text, dropped");
      return;
    }
    queries.push_back(std::move(q));
  });

  std::vector<RelevanceLabel> labels;
  TsvTable label_table(paths.labels, "labels");
  if (label_table.empty_file() || label_table.row_count() == 0) {
    warnings.push_back("labels file " + paths.labels.string() + " contains no labels");
  } else {
    const std::size_t lq_col = label_table.require_column({"query_id"});
    const std::size_t lp_col = label_table.require_column({"product_id"});
    const std::size_t grade_col = label_table.require_column({"grade", "label"});
    std::set<ProductId> kept_products;
    for (const auto& p : products) kept_products.insert(p.id);
    std::set<QueryId> kept_queries;
    for (const auto& q : queries) kept_queries.insert(q.id);
    std::set<std::pair<QueryId, ProductId>> seen;

    label_table.for_each_row([&](std::size_t line_no, const std::vector<std::string_view>& f) {
      RelevanceLabel label;
      label.query_id = label_table.parse_id(line_no, f[lq_col], "query_id");
      label.product_id = label_table.parse_id(line_no, f[lp_col], "product_id");
      auto grade = parse_grade(f[grade_col]);
      if (!grade) label_table.fail(line_no, "unknown grade '" + std::string(f[grade_col]) + "'");
      label.grade = *grade;
      if (!kept_queries.contains(label.query_id) || !kept_products.contains(label.product_id)) {
        warnings.push_back("labels line " + std::to_string(line_no) + ": dangling reference (query " +
                           std::to_string(label.query_id) + ", product " +
                           std::to_string(label.product_id) + "), dropped");
        return;
      }
      if (!seen.emplace(label.query_id, label.product_id).second) {
        warnings.push_back("labels line " + std::to_string(line_no) + ": duplicate pair, dropped");
        return;
      }
      labels.push_back(label);
    });
  }

  return LoadedCorpus{Corpus(std::move(products), std::move(queries), std::move(labels)),
                      std::move(warnings)};
}

void write_corpus(const Corpus& corpus, const CorpusPaths& paths) {
  auto open = [](const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
  };
  {
    auto out = open(paths.products);
    std::set<std::string> extra;
    for (const auto& p : corpus.products()) {
      for (const auto& [key, value] : p.extra_fields) extra.insert(key);
    }
    out << "product_id\tproduct_name\tproduct_description";
    for (const auto& key : extra) out << '\t' << key;
    out << '\n';
    for (const auto& p : corpus.products()) {
      out << p.id << '\t' << p.title << '\t' << p.description;
      for (const auto& key : extra) {
        auto it = p.extra_fields.find(key);
        out << '\t' << (it == p.extra_fields.end() ? std::string() : it->second);
      }
      out << '\n';
    }
  }
  {
    auto out = open(paths.queries);
    out << "query_id\tquery\n";
    for (const auto& q : corpus.queries()) out << q.id << '\t' << q.text << '\n';
  }
  {
    auto out = open(paths.labels);
    out << "id\tquery_id\tproduct_id\tlabel\n";
    std::size_t row = 0;
    for (const auto& l : corpus.labels()) {
      out << row++ << '\t' << l.query_id << '\t' << l.product_id << '\t' << to_string(l.grade) << '\n';
    }
  }
}

std::vector<TrainingPair> build_training_pairs(std::span<const RelevanceLabel> labels,
                                               std::uint64_t seed) {
  std::vector<TrainingPair> positives;
  std::vector<TrainingPair> negatives;
  for (const auto& label : labels) {
    if (label.grade == Grade::Exact) positives.push_back({label.query_id, label.product_id, +1});
    if (label.grade == Grade::Irrelevant) negatives.push_back({label.query_id, label.product_id, -1});
  }
  if (positives.empty() || negatives.empty()) {
    throw DataError("cannot balance training pairs: " + std::to_string(positives.size()) +
                    " Exact and " + std::to_string(negatives.size()) + " Irrelevant labels");
  }

  Rng rng(seed);
  auto& majority = positives.size() > negatives.size() ? positives : negatives;
  const std::size_t keep = std::min(positives.size(), negatives.size());
  if (majority.size() > keep) {
    rng.shuffle(std::span(majority));
    majority.resize(keep);
  }

  std::vector<TrainingPair> pairs;
  pairs.reserve(2 * keep);
  pairs.insert(pairs.end(), positives.begin(), positives.end());
  pairs.insert(pairs.end(), negatives.begin(), negatives.end());
  rng.shuffle(std::span(pairs));
  return pairs;
}

namespace {

bool capitalized_word(std::string_view w) {
  if (w.empty() || w.front() < 'A' || w.front() > 'Z') return false;
  return std::all_of(w.begin() + 1, w.end(), [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); });
}

void collect_capitalized_bigrams(std::string_view text, bool prose, std::set<std::string>& out) {
  std::vector<std::string_view> words;
  std::vector<bool> opens;
  bool sentence_start = prose;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    if (j > i) {
      std::string_view w = text.substr(i, j - i);
      const bool ends_sentence = w.back() == '.' || w.back() == '!' || w.back() == '?';
      const bool ends_clause = ends_sentence || w.back() == ',' || w.back() == ';' || w.back() == ':';
      if (ends_clause) w.remove_suffix(1);
      words.push_back(w);
      opens.push_back(sentence_start);
      sentence_start = prose && ends_sentence;
      if (ends_clause) {
        words.push_back({});
        opens.push_back(false);
      }
    }
    i = j;
  }
  for (std::size_t k = 0; k + 1 < words.size(); ++k) {
    if (opens[k] || !capitalized_word(words[k]) || !capitalized_word(words[k + 1])) continue;
    out.insert(normalize_text(std::string(words[k]) + " " + std::string(words[k + 1])));
  }
}

}  // namespace

std::vector<std::string> suggest_brand_terms(const std::filesystem::path& products_file, std::size_t max_terms,
                                             std::size_t min_products) {
  TsvTable table(products_file, "products");
  if (table.empty_file()) throw DataError("products file " + products_file.string() + " is empty");
  const std::size_t title_col = table.require_column({"title", "product_name"});
  const auto desc_col = table.find_column({"description", "product_description"});
  std::map<std::string, std::size_t> counts;
  table.for_each_row([&](std::size_t, const std::vector<std::string_view>& f) {
    std::set<std::string> found;
    collect_capitalized_bigrams(f[title_col], false, found);
    if (desc_col) collect_capitalized_bigrams(f[*desc_col], true, found);
    for (const auto& b : found) ++counts[b];
  });
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (const auto& [b, n] : counts) {
    if (n >= min_products) ranked.emplace_back(b, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (const auto& [b, n] : ranked) {
    if (out.size() == max_terms) break;
    out.push_back(b);
  }
  return out;
}

}  // namespace prodsearch
