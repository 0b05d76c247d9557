#pragma once

#include <string>
#include <vector>

namespace digesttab::testkit {

/// LaTeXML-flavoured table markup. The first `header_rows` rows become <th> rows.
/// Cell text is inserted verbatim, so "{{cite:x}}" markers and inline tags pass through.
inline std::string table_xml(const std::vector<std::vector<std::string>>& rows, std::size_t header_rows = 1) {
  std::string x = "<table class=\"ltx_tabular ltx_align_middle\">\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    x += "  <tr class=\"ltx_tr\">\n";
    for (const auto& cell : rows[r]) {
      if (r < header_rows) {
        x += "    <th class=\"ltx_td ltx_th ltx_align_center\">" + cell + "</th>\n";
      } else {
        x += "    <td class=\"ltx_td ltx_align_center\">" + cell + "</td>\n";
      }
    }
    x += "  </tr>\n";
  }
  x += "</table>";
  return x;
}

/// Pads with trailing whitespace (ignored by the tokenizer) to exactly `n` bytes.
inline std::string pad_to(std::string xml, std::size_t n) {
  if (xml.size() < n) xml += std::string(n - xml.size(), ' ');
  return xml;
}

}  // namespace digesttab::testkit
