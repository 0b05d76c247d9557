#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace digesttab::text {

/// Unicode NFC normalization. Invalid UTF-8 sequences are replaced with U+FFFD.
std::string nfc(std::string_view s);

/// Full Unicode case folding (locale independent).
std::string casefold(std::string_view s);

/// Trims and collapses every run of Unicode whitespace into a single ASCII space.
std::string collapse_whitespace(std::string_view s);

std::string trim(std::string_view s);

bool is_blank(std::string_view s);

/// NFC + casefold + whitespace collapse; the comparator form used by exact matching.
std::string normalize_for_match(std::string_view s);

/// Casefolded word tokens; any code point that is not a letter or digit separates tokens.
std::vector<std::string> word_tokens(std::string_view s);

/// Whitespace-delimited tokens, no case change.
std::vector<std::string> whitespace_tokens(std::string_view s);

/// Number of Unicode code points.
std::size_t utf8_length(std::string_view s);

/// Decodes UTF-8 into code points (invalid bytes become U+FFFD).
std::vector<char32_t> code_points(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string replace_all(std::string s, std::string_view from, std::string_view to);

}  // namespace digesttab::text
