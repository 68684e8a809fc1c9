#include <algorithm>
#include <unordered_map>

#include "prodsearch/errors.hpp"
#include "prodsearch/text.hpp"
#include "prodsearch/tokenizer.hpp"

namespace prodsearch {
namespace {

using SymbolId = std::uint32_t;

std::uint64_t pair_key(SymbolId a, SymbolId b) { return (std::uint64_t{a} << 32) | b; }

struct TrainingWord {
  std::vector<SymbolId> symbols;
  std::uint64_t count = 0;
};

/// Candidate merges ordered by count (descending), then by the surfaces of
/// the left and right symbols (ascending).
class PairQueue {
 public:
  explicit PairQueue(const std::vector<std::string>& surfaces) : surfaces_(surfaces) {}

  struct Entry {
    std::int64_t count;
    SymbolId left;
    SymbolId right;
  };

  void set(SymbolId left, SymbolId right, std::int64_t count) {
    const std::uint64_t key = pair_key(left, right);
    auto it = counts_.find(key);
    if (it != counts_.end()) {
      entries_.erase(Entry{it->second, left, right});
      if (count <= 0) {
        counts_.erase(it);
        return;
      }
      it->second = count;
    } else {
      if (count <= 0) return;
      counts_.emplace(key, count);
    }
    entries_.insert(Entry{count, left, right});
  }

  std::int64_t count(SymbolId left, SymbolId right) const {
    auto it = counts_.find(pair_key(left, right));
    return it == counts_.end() ? 0 : it->second;
  }

  bool empty() const { return entries_.empty(); }
  const Entry& top() const { return *entries_.begin(); }

 private:
  struct Less {
    const std::vector<std::string>* surfaces;
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.count != b.count) return a.count > b.count;
      const auto& s = *surfaces;
      if (a.left != b.left) {
        const int c = s[a.left].compare(s[b.left]);
        if (c != 0) return c < 0;
      }
      if (a.right != b.right) return s[a.right] < s[b.right];
      return false;
    }
  };

  const std::vector<std::string>& surfaces_;
  std::unordered_map<std::uint64_t, std::int64_t> counts_;
  std::set<Entry, Less> entries_{Less{&surfaces_}};
};

}  // namespace

Vocabulary train_bpe(std::span<const std::string> corpus_texts, std::size_t vocab_size,
                     const std::set<std::string>& special_terms) {
  if (corpus_texts.empty()) throw DataError("bpe tokenizer: training corpus is empty");

  const auto counts = detail::count_words(corpus_texts, special_terms);

  std::vector<std::string> surfaces;
  std::unordered_map<std::string, SymbolId> symbol_of;
  auto intern = [&](const std::string& s) {
    auto [it, inserted] = symbol_of.emplace(s, static_cast<SymbolId>(surfaces.size()));
    if (inserted) surfaces.push_back(s);
    return it->second;
  };

  std::set<std::string> alphabet;
  for (const auto& [word, count] : counts) {
    for (auto& cp : split_codepoints(word)) alphabet.insert(std::move(cp));
  }
  for (const auto& ch : alphabet) intern(ch);

  std::vector<std::string> tokens{std::string(kUnkToken)};
  std::set<std::string> present;
  for (const auto& term : special_terms) {
    tokens.push_back(term);
    present.insert(term);
  }
  for (const auto& ch : alphabet) {
    if (present.insert(ch).second) tokens.push_back(ch);
  }
  if (vocab_size < tokens.size() - 1) {
    throw ConfigError("bpe tokenizer: vocab_size " + std::to_string(vocab_size) +
                      " is smaller than alphabet plus special terms (" +
                      std::to_string(tokens.size() - 1) + ")");
  }

  std::vector<TrainingWord> words;
  words.reserve(counts.size());
  for (const auto& [word, count] : counts) {
    TrainingWord w;
    w.count = count;
    for (const auto& cp : split_codepoints(word)) w.symbols.push_back(symbol_of.at(cp));
    words.push_back(std::move(w));
  }

  PairQueue queue(surfaces);
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where;
  {
    std::unordered_map<std::uint64_t, std::int64_t> initial;
    for (std::uint32_t wi = 0; wi < words.size(); ++wi) {
      const auto& syms = words[wi].symbols;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        const std::uint64_t key = pair_key(syms[i], syms[i + 1]);
        initial[key] += static_cast<std::int64_t>(words[wi].count);
        auto& list = where[key];
        if (list.empty() || list.back() != wi) list.push_back(wi);
      }
    }
    for (const auto& [key, count] : initial) {
      queue.set(static_cast<SymbolId>(key >> 32), static_cast<SymbolId>(key & 0xffffffffu), count);
    }
  }

  std::vector<Vocabulary::Merge> merges;
  while (tokens.size() - 1 < vocab_size && !queue.empty()) {
    const auto best = queue.top();
    const SymbolId left = best.left;
    const SymbolId right = best.right;
    const std::string merged_surface = surfaces[left] + surfaces[right];
    const SymbolId merged = intern(merged_surface);
    merges.emplace_back(surfaces[left], surfaces[right]);
    if (present.insert(merged_surface).second) tokens.push_back(merged_surface);

    std::unordered_map<std::uint64_t, std::int64_t> delta;
    std::vector<std::uint32_t> affected = std::move(where[pair_key(left, right)]);
    where.erase(pair_key(left, right));
    for (std::uint32_t wi : affected) {
      auto& w = words[wi];
      const auto wc = static_cast<std::int64_t>(w.count);
      bool contains = false;
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
        if (w.symbols[i] == left && w.symbols[i + 1] == right) {
          contains = true;
          break;
        }
      }
      if (!contains) continue;
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
        delta[pair_key(w.symbols[i], w.symbols[i + 1])] -= wc;
      }
      std::vector<SymbolId> next;
      next.reserve(w.symbols.size());
      for (std::size_t i = 0; i < w.symbols.size();) {
        if (i + 1 < w.symbols.size() && w.symbols[i] == left && w.symbols[i + 1] == right) {
          next.push_back(merged);
          i += 2;
        } else {
          next.push_back(w.symbols[i]);
          ++i;
        }
      }
      w.symbols = std::move(next);
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
        const std::uint64_t key = pair_key(w.symbols[i], w.symbols[i + 1]);
        delta[key] += wc;
        auto& list = where[key];
        if (list.empty() || list.back() != wi) list.push_back(wi);
      }
    }
    for (const auto& [key, d] : delta) {
      if (d == 0) continue;
      const auto l = static_cast<SymbolId>(key >> 32);
      const auto r = static_cast<SymbolId>(key & 0xffffffffu);
      queue.set(l, r, queue.count(l, r) + d);
    }
  }

  return Vocabulary(TokenizerKind::BPE, std::move(tokens), special_terms, std::move(merges), {});
}

}  // namespace prodsearch
