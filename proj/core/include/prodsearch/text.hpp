#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace prodsearch {

/// Lowercase, NFC-compose, collapse whitespace runs to one ASCII space and
/// strip both ends. Total: invalid UTF-8 sequences become U+FFFD.
std::string normalize_text(std::string_view raw);

/// Splits UTF-8 text into code points, each returned as its byte string.
/// Malformed bytes are returned one byte at a time.
std::vector<std::string> split_codepoints(std::string_view text);

/// Splits on single ASCII spaces. Empty pieces are dropped.
std::vector<std::string_view> split_words(std::string_view text);

/// Number of UTF-8 code points in `text`.
std::size_t codepoint_count(std::string_view text);

}  // namespace prodsearch
