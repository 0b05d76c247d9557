#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "digesttab/core/error.hpp"

namespace digesttab::curation {

class MalformedXml : public Error {
 public:
  explicit MalformedXml(const std::string& m) : Error(ErrorKind::MalformedXml, m) {}
};

struct XmlCell {
  std::string text;  // entity-decoded, whitespace-collapsed, NFC
  bool header = false;
  int colspan = 1;
  int rowspan = 1;
  bool math = false;    // contained a <math>/<formula> element
  bool figure = false;  // contained a <graphics>/<img>/<figure> element
};

struct XmlRow {
  std::vector<XmlCell> cells;
  bool header = false;  // every cell is a header cell, or the row is marked/in <thead>
};

struct XmlTable {
  std::vector<XmlRow> rows;
  bool has_cell_tags = false;
};

/// Tokenizes one table element. Rows are <tr>/<row>; cells are <td>/<th>/<cell>/<entry>.
/// Header cells: <th>, or a class attribute containing "ltx_th", or header="true".
/// <cite ref="x"/> elements become "{{cite:x}}" text. Throws MalformedXml on unbalanced
/// or unterminated markup.
XmlTable tokenize_table(std::string_view xml);

/// A rectangular view of the table with row/col spans expanded; spanned slots repeat
/// the originating cell's text. `origin` marks slots that hold the originating cell.
struct GridSlot {
  std::string text;
  bool header = false;
  bool filled = false;
  bool origin = false;
  bool math = false;
  bool figure = false;
};

struct Grid {
  std::vector<std::vector<GridSlot>> rows;  // ragged: each row as wide as it extends
  std::vector<bool> header_row;
  std::size_t width = 0;
};

Grid expand_spans(const XmlTable& table);

}  // namespace digesttab::curation
