#include "digesttab/core/model.hpp"

#include <algorithm>
#include <set>

#include "digesttab/core/error.hpp"
#include "digesttab/core/text.hpp"

namespace digesttab {

CellValue CellValue::of(std::string text) {
  CellValue v;
  if (text::is_blank(text)) return v;
  v.text_ = std::move(text);
  v.empty_ = false;
  return v;
}

const CellValue& ReviewTable::cell(const std::string& row, const std::string& aspect) const {
  static const CellValue kEmpty;
  auto it = cells.find({row, aspect});
  return it == cells.end() ? kEmpty : it->second;
}

void ReviewTable::set_cell(const std::string& row, const std::string& aspect, CellValue value) {
  cells[{row, aspect}] = std::move(value);
}

std::vector<CellValue> ReviewTable::column(const std::string& aspect) const {
  std::vector<CellValue> out;
  out.reserve(row_keys.size());
  for (const auto& r : row_keys) out.push_back(cell(r, aspect));
  return out;
}

const PaperRecord* ReviewTable::paper(const std::string& cite_id) const {
  auto it = std::find_if(papers.begin(), papers.end(),
                         [&](const PaperRecord& p) { return p.cite_id == cite_id; });
  return it == papers.end() ? nullptr : &*it;
}

void ReviewTable::upsert_paper(PaperRecord p) {
  auto it = std::find_if(papers.begin(), papers.end(),
                         [&](const PaperRecord& q) { return q.cite_id == p.cite_id; });
  if (it == papers.end()) {
    papers.push_back(std::move(p));
  } else {
    *it = std::move(p);
  }
}

void ReviewTable::remove_row(const std::string& row) {
  row_keys.erase(std::remove(row_keys.begin(), row_keys.end(), row), row_keys.end());
  for (auto it = cells.begin(); it != cells.end();) {
    it = it->first.first == row ? cells.erase(it) : std::next(it);
  }
}

void ReviewTable::remove_aspect(const std::string& aspect) {
  aspects.erase(std::remove(aspects.begin(), aspects.end(), aspect), aspects.end());
  for (auto it = cells.begin(); it != cells.end();) {
    it = it->first.second == aspect ? cells.erase(it) : std::next(it);
  }
}

void check_schema(const Schema& schema) {
  std::set<std::string> seen;
  for (const auto& a : schema.aspects) {
    if (text::is_blank(a)) throw ValidationError("schema aspect names must be non-empty");
    if (!seen.insert(a).second) throw ValidationError("duplicate schema aspect: " + a);
  }
}

std::vector<Violation> validate_table(const ReviewTable& table, ValidateOptions options) {
  std::vector<Violation> out;
  std::set<std::string> rows;
  for (const auto& r : table.row_keys) {
    if (r.empty()) out.push_back({"empty-row-key", r, "", "row key is empty"});
    if (!rows.insert(r).second) out.push_back({"duplicate-row", r, "", "row key repeats"});
  }
  std::set<std::string> aspects;
  for (const auto& a : table.aspects) {
    if (text::is_blank(a)) out.push_back({"empty-aspect", "", a, "aspect name is empty"});
    if (a == kReferencesColumn) {
      out.push_back({"reserved-aspect", "", a, "'References' is reserved for row identity"});
    }
    if (!aspects.insert(a).second) out.push_back({"duplicate-aspect", "", a, "aspect name repeats"});
  }
  if (options.require_min_size) {
    if (table.row_keys.size() < 2) {
      out.push_back({"too-few-rows", "", "", "table needs at least 2 rows"});
    }
    if (table.aspects.size() < 2) {
      out.push_back({"too-few-aspects", "", "", "table needs at least 2 aspects"});
    }
  }
  for (const auto& r : rows) {
    for (const auto& a : aspects) {
      auto it = table.cells.find({r, a});
      if (it == table.cells.end()) {
        out.push_back({"missing-cell", r, a, "no cell for (" + r + ", " + a + ")"});
      } else if (!it->second.empty() && text::is_blank(it->second.text())) {
        out.push_back({"blank-nonempty-cell", r, a, "non-empty cell has blank text"});
      }
    }
  }
  for (const auto& [key, value] : table.cells) {
    if (!rows.count(key.first) || !aspects.count(key.second)) {
      out.push_back({"orphan-cell", key.first, key.second, "cell outside the table grid"});
    }
  }
  return out;
}

}  // namespace digesttab
