#include "digesttab/core/json_extract.hpp"

#include <cctype>
#include <string>
#include <vector>

namespace digesttab {

namespace {

bool shape_ok(const nlohmann::json& j, JsonShape shape) {
  switch (shape) {
    case JsonShape::Any: return j.is_object() || j.is_array();
    case JsonShape::Object: return j.is_object();
    case JsonShape::Array: return j.is_array();
  }
  return false;
}

std::optional<nlohmann::json> try_parse(std::string_view s, JsonShape shape) {
  for (int pass = 0; pass < 2; ++pass) {
    std::string src = pass == 0 ? std::string(s) : python_literal_to_json(s);
    try {
      auto j = nlohmann::json::parse(src);
      if (shape_ok(j, shape)) return j;
      return std::nullopt;
    } catch (const nlohmann::json::exception&) {
    }
  }
  return std::nullopt;
}

// End index (exclusive) of the bracketed span opening at `open`, or npos.
std::size_t match_close(std::string_view s, std::size_t open) {
  std::vector<char> stack;
  char quote = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (quote) {
      if (c == '\\') {
        ++i;
      } else if (c == quote) {
        quote = 0;
      }
      continue;
    }
    if (c == '"' || (c == '\'' && i > 0 && !std::isalnum(static_cast<unsigned char>(s[i - 1])))) {
      quote = c;
    } else if (c == '[' || c == '{') {
      stack.push_back(c == '[' ? ']' : '}');
    } else if (c == ']' || c == '}') {
      if (stack.empty() || stack.back() != c) return std::string_view::npos;
      stack.pop_back();
      if (stack.empty()) return i + 1;
    }
  }
  return std::string_view::npos;
}

}  // namespace

std::string python_literal_to_json(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  char quote = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (!quote) {
      if (c == '"' || c == '\'') {
        quote = c;
        out += '"';
      } else {
        out += c;
      }
      continue;
    }
    if (c == '\\' && i + 1 < text.size()) {
      if (quote == '\'' && text[i + 1] == '\'') {
        out += '\'';
      } else {
        out += c;
        out += text[i + 1];
      }
      ++i;
    } else if (c == quote) {
      quote = 0;
      out += '"';
    } else if (c == '"') {
      out += "\\\"";
    } else {
      out += c;
    }
  }
  return out;
}

std::optional<nlohmann::json> extract_json(std::string_view text, JsonShape shape) {
  std::size_t pos = 0;
  while ((pos = text.find("```", pos)) != std::string_view::npos) {
    auto body = text.find('\n', pos + 3);
    if (body == std::string_view::npos) break;
    auto end = text.find("```", body);
    if (end == std::string_view::npos) break;
    if (auto j = try_parse(text.substr(body + 1, end - body - 1), shape)) return j;
    pos = end + 3;
  }
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '[' && text[i] != '{') continue;
    if (shape == JsonShape::Object && text[i] != '{') continue;
    if (shape == JsonShape::Array && text[i] != '[') continue;
    auto end = match_close(text, i);
    if (end == std::string_view::npos) continue;
    if (auto j = try_parse(text.substr(i, end - i), shape)) return j;
  }
  return std::nullopt;
}

}  // namespace digesttab
