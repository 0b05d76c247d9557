#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace digesttab::csv {

using Row = std::vector<std::string>;

/// RFC 4180 field quoting: fields containing comma, quote, CR or LF are quoted.
std::string escape(std::string_view field);
std::string format_row(const Row& row);
std::string format(const std::vector<Row>& rows);

/// Parses RFC 4180 text (quoted fields may span lines). Throws ValidationError
/// on an unterminated quote. A trailing newline does not produce an empty row.
std::vector<Row> parse(std::string_view body);

}  // namespace digesttab::csv
