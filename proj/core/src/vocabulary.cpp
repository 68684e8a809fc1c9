#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "prodsearch/binary_io.hpp"
#include "prodsearch/errors.hpp"
#include "prodsearch/hash.hpp"
#include "prodsearch/text.hpp"
#include "prodsearch/tokenizer.hpp"

namespace prodsearch {
namespace {

constexpr std::string_view kVocabMagic = "PRODSEARCH-VOCAB";
constexpr int kVocabVersion = 1;

std::string merge_key(std::string_view left, std::string_view right) {
  std::string key;
  key.reserve(left.size() + right.size() + 1);
  key.append(left);
  key.push_back('\x1f');
  key.append(right);
  return key;
}

std::string escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out.push_back(s[i]);
      continue;
    }
    switch (s[++i]) {
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      default: out.push_back(s[i]);
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw InvariantError("cannot format double");
  return std::string(buf, ptr);
}

/// Line-oriented reader for the vocabulary text format.
class VocabReader {
 public:
  explicit VocabReader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view next_line(std::string_view expecting) {
    if (pos_ >= bytes_.size()) {
      throw DataError("vocabulary file truncated: expected " + std::string(expecting) +
                      " at line " + std::to_string(line_no_ + 1));
    }
    std::size_t end = bytes_.find('\n', pos_);
    if (end == std::string_view::npos) end = bytes_.size();
    std::string_view line = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    ++line_no_;
    return line;
  }

  std::vector<std::string_view> fields(std::string_view expecting) {
    std::string_view line = next_line(expecting);
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      if (tab == std::string_view::npos) {
        out.push_back(line.substr(start));
        break;
      }
      out.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    return out;
  }

  /// Reads "<name>\t<count>".
  std::size_t section(std::string_view name) {
    auto f = fields(name);
    if (f.size() != 2 || f[0] != name) fail("expected section '" + std::string(name) + "'");
    return parse_count(f[1]);
  }

  std::size_t parse_count(std::string_view s) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) fail("bad count '" + std::string(s) + "'");
    return v;
  }

  double parse_double(std::string_view s) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) fail("bad number '" + std::string(s) + "'");
    return v;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw DataError("vocabulary file line " + std::to_string(line_no_) + ": " + why);
  }

  bool at_end() const { return pos_ >= bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

}  // namespace

std::string_view to_string(TokenizerKind kind) {
  switch (kind) {
    case TokenizerKind::Word: return "word";
    case TokenizerKind::BPE: return "bpe";
    case TokenizerKind::Unigram: return "unigram";
  }
  return "word";
}

TokenizerKind parse_tokenizer_kind(std::string_view text) {
  std::string t(text);
  for (char& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (t == "word") return TokenizerKind::Word;
  if (t == "bpe") return TokenizerKind::BPE;
  if (t == "unigram") return TokenizerKind::Unigram;
  throw ConfigError("unknown tokenizer kind '" + std::string(text) + "' (expected word, bpe or unigram)");
}

SpecialTermMatcher::SpecialTermMatcher(const std::set<std::string>& terms) {
  for (const auto& term : terms) {
    auto words = split_words(term);
    if (words.empty()) continue;
    by_first_word_[std::string(words.front())].emplace_back(term, words.size());
  }
  for (auto& [first, list] : by_first_word_) {
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
  }
}

std::vector<TextSpan> SpecialTermMatcher::split(std::string_view text) const {
  const auto words = split_words(text);
  std::vector<TextSpan> spans;
  spans.reserve(words.size());
  for (std::size_t w = 0; w < words.size();) {
    const bool space_before = w > 0;
    std::size_t matched_words = 0;
    std::string_view matched;
    if (!by_first_word_.empty()) {
      auto it = by_first_word_.find(words[w]);
      if (it != by_first_word_.end()) {
        for (const auto& [term, count] : it->second) {
          if (w + count > words.size()) continue;
          // Words are slices of `text` separated by single spaces.
          const char* begin = words[w].data();
          const char* end = words[w + count - 1].data() + words[w + count - 1].size();
          std::string_view candidate(begin, static_cast<std::size_t>(end - begin));
          if (candidate == term) {
            matched_words = count;
            matched = candidate;
            break;
          }
        }
      }
    }
    if (matched_words > 0) {
      spans.push_back({matched, true, space_before});
      w += matched_words;
    } else {
      spans.push_back({words[w], false, space_before});
      ++w;
    }
  }
  return spans;
}

Vocabulary::Vocabulary(TokenizerKind kind, std::vector<std::string> tokens,
                       std::set<std::string> special_terms, std::vector<Merge> merges,
                       std::vector<double> log_probs, std::string provenance)
    : kind_(kind),
      tokens_(std::move(tokens)),
      special_terms_(std::move(special_terms)),
      merges_(std::move(merges)),
      log_probs_(std::move(log_probs)),
      provenance_(std::move(provenance)) {
  if (tokens_.empty() || tokens_[kUnkId] != kUnkToken) {
    throw DataError("vocabulary must start with the reserved token " + std::string(kUnkToken));
  }
  token_to_id_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw DataError("vocabulary token " + std::to_string(i) + " is empty");
    if (!token_to_id_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
  for (const auto& term : special_terms_) {
    if (term.empty() || term != normalize_text(term)) {
      throw DataError("special term '" + term + "' is not normalized");
    }
    if (!token_to_id_.contains(term)) throw DataError("special term '" + term + "' has no token id");
  }
  if (kind_ != TokenizerKind::BPE && !merges_.empty()) {
    throw DataError("merges are only valid for BPE vocabularies");
  }
  merge_rank_.reserve(merges_.size());
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    const auto& [left, right] = merges_[r];
    if (!token_to_id_.contains(left) || !token_to_id_.contains(right) ||
        !token_to_id_.contains(left + right)) {
      throw DataError("merge " + std::to_string(r) + " ('" + left + "', '" + right +
                      "') references unknown tokens");
    }
    merge_rank_.emplace(merge_key(left, right), r);
  }
  if (kind_ == TokenizerKind::Unigram) {
    if (log_probs_.size() != tokens_.size()) {
      throw DataError("unigram vocabulary needs one log-probability per token");
    }
    for (double lp : log_probs_) {
      if (!std::isfinite(lp) || lp > 0.0) throw DataError("unigram log-probabilities must be finite and <= 0");
    }
    unknown_log_prob_ = log_probs_[kUnkId];
  } else if (!log_probs_.empty()) {
    throw DataError("log-probabilities are only valid for unigram vocabularies");
  }
  matcher_ = SpecialTermMatcher(special_terms_);

  Fingerprinter fp;
  fp.update(to_string(kind_));
  fp.update_u64(tokens_.size());
  for (const auto& t : tokens_) fp.update(t);
  fp.update_u64(special_terms_.size());
  for (const auto& t : special_terms_) fp.update(t);
  fp.update_u64(merges_.size());
  for (const auto& [l, r] : merges_) {
    fp.update(l);
    fp.update(r);
  }
  fp.update_u64(log_probs_.size());
  for (double lp : log_probs_) fp.update_f64(lp);
  fingerprint_ = fp.digest();
}

std::optional<TokenId> Vocabulary::find(std::string_view surface) const {
  auto it = token_to_id_.find(surface);
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Vocabulary::merge_rank(std::string_view left, std::string_view right) const {
  auto it = merge_rank_.find(merge_key(left, right));
  if (it == merge_rank_.end()) return std::nullopt;
  return it->second;
}

bool Vocabulary::operator==(const Vocabulary& other) const {
  return kind_ == other.kind_ && tokens_ == other.tokens_ && special_terms_ == other.special_terms_ &&
         merges_ == other.merges_ && log_probs_ == other.log_probs_ &&
         provenance_ == other.provenance_;
}

std::string TokenSequence::join() const {
  std::string out;
  for (std::size_t i = 0; i < surfaces.size(); ++i) {
    if (space_before[i]) out.push_back(' ');
    out += surfaces[i];
  }
  return out;
}

std::set<std::string> load_special_terms(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open brand list " + path.string());
  std::set<std::string> terms;
  std::string line;
  while (std::getline(in, line)) {
    std::string term = normalize_text(line);
    if (!term.empty()) terms.insert(std::move(term));
  }
  return terms;
}

std::string serialize_vocab(const Vocabulary& vocab) {
  std::string out;
  out += std::string(kVocabMagic) + "\t" + std::to_string(kVocabVersion) + "\n";
  out += "kind\t" + std::string(to_string(vocab.kind())) + "\n";

  std::vector<std::string_view> prov_lines;
  if (!vocab.provenance().empty()) {
    std::string_view p = vocab.provenance();
    std::size_t start = 0;
    while (start <= p.size()) {
      std::size_t end = p.find('\n', start);
      if (end == std::string_view::npos) end = p.size();
      prov_lines.push_back(p.substr(start, end - start));
      start = end + 1;
    }
  }
  out += "provenance\t" + std::to_string(prov_lines.size()) + "\n";
  for (auto line : prov_lines) out += escape(line) + "\n";

  const bool unigram = vocab.kind() == TokenizerKind::Unigram;
  out += "tokens\t" + std::to_string(vocab.size()) + "\n";
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    out += escape(vocab.tokens()[i]);
    out += '\t';
    out += unigram ? format_double(vocab.log_probs()[i]) : std::string("-");
    out += '\n';
  }
  out += "specials\t" + std::to_string(vocab.special_terms().size()) + "\n";
  for (const auto& s : vocab.special_terms()) out += escape(s) + "\n";
  out += "merges\t" + std::to_string(vocab.merges().size()) + "\n";
  for (const auto& [l, r] : vocab.merges()) out += escape(l) + "\t" + escape(r) + "\n";
  out += "end\n";
  return out;
}

Vocabulary parse_vocab(std::string_view bytes) {
  VocabReader in(bytes);
  {
    auto header = in.fields("header");
    if (header.empty() || header[0] != kVocabMagic) {
      throw DataError("vocabulary file: bad header, expected magic string \"" +
                      std::string(kVocabMagic) + "\"");
    }
    if (header.size() != 2 || header[1] != std::to_string(kVocabVersion)) {
      throw DataError("vocabulary file: unsupported version '" +
                      std::string(header.size() > 1 ? header[1] : "") + "', expected " +
                      std::to_string(kVocabVersion));
    }
  }
  auto kind_fields = in.fields("kind");
  if (kind_fields.size() != 2 || kind_fields[0] != "kind") in.fail("expected 'kind'");
  TokenizerKind kind;
  try {
    kind = parse_tokenizer_kind(kind_fields[1]);
  } catch (const ConfigError& e) {
    in.fail(e.what());
  }

  const std::size_t n_prov = in.section("provenance");
  std::string provenance;
  for (std::size_t i = 0; i < n_prov; ++i) {
    if (i > 0) provenance.push_back('\n');
    provenance += unescape(in.next_line("provenance line"));
  }

  const std::size_t n_tokens = in.section("tokens");
  std::vector<std::string> tokens;
  std::vector<double> log_probs;
  tokens.reserve(n_tokens);
  for (std::size_t i = 0; i < n_tokens; ++i) {
    auto f = in.fields("token");
    if (f.size() != 2) in.fail("expected token<TAB>score");
    tokens.push_back(unescape(f[0]));
    if (kind == TokenizerKind::Unigram) log_probs.push_back(in.parse_double(f[1]));
    else if (f[1] != "-") in.fail("unexpected score for non-unigram token");
  }
  const std::size_t n_specials = in.section("specials");
  std::set<std::string> specials;
  for (std::size_t i = 0; i < n_specials; ++i) specials.insert(unescape(in.next_line("special term")));
  const std::size_t n_merges = in.section("merges");
  std::vector<Vocabulary::Merge> merges;
  merges.reserve(n_merges);
  for (std::size_t i = 0; i < n_merges; ++i) {
    auto f = in.fields("merge");
    if (f.size() != 2) in.fail("expected left<TAB>right");
    merges.emplace_back(unescape(f[0]), unescape(f[1]));
  }
  if (in.next_line("end marker") != "end") in.fail("expected 'end'");
  if (!in.at_end()) in.fail("trailing data after 'end'");
  return Vocabulary(kind, std::move(tokens), std::move(specials), std::move(merges),
                    std::move(log_probs), std::move(provenance));
}

void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_vocab(vocab));
}

Vocabulary load_vocab(const std::filesystem::path& path) {
  return parse_vocab(read_file_bytes(path));
}

namespace detail {

std::map<std::string, std::uint64_t> count_words(std::span<const std::string> corpus_texts,
                                                 const std::set<std::string>& special_terms) {
  const SpecialTermMatcher matcher(special_terms);
  std::unordered_map<std::string_view, std::uint64_t> counts;
  for (const auto& text : corpus_texts) {
    for (const auto& span : matcher.split(text)) {
      if (!span.special) ++counts[span.text];
    }
  }
  std::map<std::string, std::uint64_t> out;
  for (const auto& [word, n] : counts) out.emplace(std::string(word), n);
  return out;
}

std::vector<std::size_t> codepoint_offsets(std::string_view word) {
  std::vector<std::size_t> off;
  off.reserve(word.size() + 1);
  std::size_t pos = 0;
  for (const auto& cp : split_codepoints(word)) {
    off.push_back(pos);
    pos += cp.size();
  }
  off.push_back(pos);
  return off;
}

}  // namespace detail
}  // namespace prodsearch
