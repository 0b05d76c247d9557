#pragma once

#include <string>
#include <vector>

#include "digesttab/core/model.hpp"

namespace digesttab::testkit {

/// A table with rows r0, r1, ... and `columns[a][row]` as cell text ("" is blank).
inline ReviewTable table_of(const std::string& id, const std::vector<std::string>& aspects,
                            const std::vector<std::vector<std::string>>& columns) {
  ReviewTable t;
  t.table_id = id;
  t.aspects = aspects;
  std::size_t rows = columns.empty() ? 2 : columns[0].size();
  for (std::size_t r = 0; r < rows; ++r) {
    auto key = "r" + std::to_string(r);
    t.row_keys.push_back(key);
    t.papers.push_back({key, std::nullopt, "Paper " + key, std::nullopt, std::nullopt});
  }
  for (std::size_t a = 0; a < aspects.size(); ++a) {
    for (std::size_t r = 0; r < rows; ++r) {
      const std::string v = a < columns.size() && r < columns[a].size() ? columns[a][r] : "";
      t.set_cell(t.row_keys[r], aspects[a], CellValue::of(v));
    }
  }
  return t;
}

/// Same shape with every cell set to "x".
inline ReviewTable schema_table(const std::string& id, const std::vector<std::string>& aspects) {
  return table_of(id, aspects, std::vector<std::vector<std::string>>(aspects.size(), {"x", "x"}));
}

}  // namespace digesttab::testkit
