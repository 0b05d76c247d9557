#pragma once

#include <optional>
#include <string_view>

#include <json.hpp>

namespace digesttab {

enum class JsonShape { Any, Object, Array };

/// Finds the first JSON value of the requested shape in free-form model output.
/// Fenced code blocks are tried first, then every bracketed span in order.
/// Single-quoted (Python style) strings are accepted as a fallback.
std::optional<nlohmann::json> extract_json(std::string_view text, JsonShape shape = JsonShape::Any);

/// Rewrites single-quoted string literals as JSON double-quoted ones.
std::string python_literal_to_json(std::string_view text);

}  // namespace digesttab
