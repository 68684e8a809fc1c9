#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the library's algorithms.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

inline std::vector<std::string> utf8_chars(const std::string& s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : 4;
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

inline std::vector<std::string> split_spaces(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

/// Plain BPE: every step recounts all adjacent pairs over every word
/// occurrence from scratch, takes the most frequent (ties: smallest left, then
/// right surface) and rewrites all words left to right.
struct BpeRun {
  std::vector<std::pair<std::string, std::string>> merges;
  /// Final training-time segmentation of every distinct word.
  std::map<std::string, std::vector<std::string>> segmentations;
};

inline BpeRun bpe_train(const std::vector<std::string>& texts, std::size_t vocab_size) {
  std::vector<std::vector<std::string>> words;
  std::vector<std::string> originals;
  std::set<std::string> alphabet;
  for (const auto& t : texts) {
    for (const auto& w : split_spaces(t)) {
      originals.push_back(w);
      words.push_back(utf8_chars(w));
      for (const auto& c : words.back()) alphabet.insert(c);
    }
  }
  std::vector<std::pair<std::string, std::string>> merges;
  while (alphabet.size() + merges.size() < vocab_size) {
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.size(); ++i) ++counts[{w[i], w[i + 1]}];
    }
    if (counts.empty()) break;
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
      if (it->second > best->second) best = it;  // map order gives the lexicographic tie-break
    }
    const auto [left, right] = best->first;
    merges.emplace_back(left, right);
    for (auto& w : words) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < w.size();) {
        if (i + 1 < w.size() && w[i] == left && w[i + 1] == right) {
          next.push_back(left + right);
          i += 2;
        } else {
          next.push_back(w[i]);
          ++i;
        }
      }
      w = std::move(next);
    }
  }
  BpeRun run{merges, {}};
  for (std::size_t i = 0; i < words.size(); ++i) run.segmentations[originals[i]] = words[i];
  return run;
}

struct Segmentation {
  std::vector<std::string> pieces;
  double score = -std::numeric_limits<double>::infinity();
};

/// Enumerates all 2^(n-1) segmentations. Pieces absent from `log_probs` are
/// inadmissible unless they are a single character, which costs
/// `unknown_log_prob`. Scores are folded right to left. Preference: higher
/// score, then fewer pieces, then longer pieces from the left.
inline std::optional<Segmentation> best_segmentation(const std::string& word,
                                                     const std::map<std::string, double>& log_probs,
                                                     double unknown_log_prob) {
  const auto chars = utf8_chars(word);
  const std::size_t n = chars.size();
  if (n == 0) return Segmentation{{}, 0.0};
  std::optional<Segmentation> best;
  std::vector<std::size_t> best_lengths;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << (n - 1)); ++mask) {
    std::vector<std::string> pieces;
    std::vector<std::size_t> lengths;
    std::string cur = chars[0];
    std::size_t len = 1;
    for (std::size_t i = 1; i < n; ++i) {
      if (mask & (std::uint64_t{1} << (i - 1))) {
        pieces.push_back(cur);
        lengths.push_back(len);
        cur.clear();
        len = 0;
      }
      cur += chars[i];
      ++len;
    }
    pieces.push_back(cur);
    lengths.push_back(len);

    bool ok = true;
    std::vector<double> scores;
    for (std::size_t p = 0; p < pieces.size(); ++p) {
      auto it = log_probs.find(pieces[p]);
      if (it != log_probs.end()) {
        scores.push_back(it->second);
      } else if (lengths[p] == 1) {
        scores.push_back(unknown_log_prob);
      } else {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    double total = scores.back();
    for (std::size_t p = scores.size() - 1; p-- > 0;) total = scores[p] + total;

    bool better = false;
    if (!best || total > best->score) {
      better = true;
    } else if (total == best->score) {
      if (pieces.size() < best->pieces.size()) {
        better = true;
      } else if (pieces.size() == best->pieces.size()) {
        better = std::lexicographical_compare(best_lengths.begin(), best_lengths.end(), lengths.begin(),
                                              lengths.end());
      }
    }
    if (better) {
      best = Segmentation{pieces, total};
      best_lengths = lengths;
    }
  }
  return best;
}

using Matrix = std::vector<std::vector<double>>;

/// sum_i max_j q_i . p_j with a plain double loop.
inline double maxsim(const Matrix& q, const Matrix& p) {
  double total = 0.0;
  for (const auto& qi : q) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& pj : p) {
      double d = 0.0;
      for (std::size_t k = 0; k < qi.size(); ++k) d += qi[k] * pj[k];
      best = std::max(best, d);
    }
    total += best;
  }
  return total;
}

/// mean(q) . mean(p).
inline double pooled(const Matrix& q, const Matrix& p) {
  const std::size_t dim = q.front().size();
  std::vector<double> mq(dim, 0.0), mp(dim, 0.0);
  for (const auto& r : q)
    for (std::size_t k = 0; k < dim; ++k) mq[k] += r[k] / static_cast<double>(q.size());
  for (const auto& r : p)
    for (std::size_t k = 0; k < dim; ++k) mp[k] += r[k] / static_cast<double>(p.size());
  double d = 0.0;
  for (std::size_t k = 0; k < dim; ++k) d += mq[k] * mp[k];
  return d;
}

}  // namespace oracle
