#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace digesttab {

/// Row key carried in the corpus JSON `References` column; never a legal aspect name.
inline constexpr const char* kReferencesColumn = "References";

struct PaperRecord {
  std::string cite_id;
  std::optional<std::string> external_id;
  std::string title;
  std::optional<std::string> abstract;
  std::optional<std::string> full_text;

  bool operator==(const PaperRecord&) const = default;
};

struct InTextReference {
  std::string section;
  std::string text;

  bool operator==(const InTextReference&) const = default;
};

/// One table cell. Absent information is an explicit empty marker, never a missing key.
class CellValue {
 public:
  CellValue() = default;

  /// Whitespace-only text becomes the empty marker.
  static CellValue of(std::string text);
  static CellValue blank() { return CellValue{}; }

  const std::string& text() const noexcept { return text_; }
  bool empty() const noexcept { return empty_; }

  bool operator==(const CellValue&) const = default;

 private:
  std::string text_;
  bool empty_ = true;
};

using CellKey = std::pair<std::string, std::string>;  // (cite_id, aspect)

struct ReviewTable {
  std::string table_id;
  std::optional<std::string> source_paper_id;
  std::optional<std::string> caption;
  std::vector<InTextReference> in_text_refs;
  std::vector<std::string> row_keys;
  std::vector<std::string> aspects;
  std::map<CellKey, CellValue> cells;
  /// citation_info, in corpus order.
  std::vector<PaperRecord> papers;
  /// Free-form provenance block; serialized only when non-empty.
  nlohmann::ordered_json provenance = nlohmann::ordered_json::object();

  const CellValue& cell(const std::string& row, const std::string& aspect) const;
  void set_cell(const std::string& row, const std::string& aspect, CellValue value);

  /// Column values in row order; missing cells read as empty.
  std::vector<CellValue> column(const std::string& aspect) const;

  const PaperRecord* paper(const std::string& cite_id) const;
  void upsert_paper(PaperRecord paper);

  /// Drops a row together with its cells (papers are kept).
  void remove_row(const std::string& row);
  void remove_aspect(const std::string& aspect);

  std::size_t num_rows() const noexcept { return row_keys.size(); }
  std::size_t num_aspects() const noexcept { return aspects.size(); }

  bool operator==(const ReviewTable&) const = default;
};

struct Schema {
  std::vector<std::string> aspects;

  bool operator==(const Schema&) const = default;
};

/// Throws ValidationError if aspects are empty strings or repeat.
void check_schema(const Schema& schema);

struct Violation {
  std::string kind;  // e.g. "duplicate-aspect", "missing-cell"
  std::string row;
  std::string aspect;
  std::string message;
};

struct ValidateOptions {
  /// M >= 2 and N >= 2, as required for any corpus table.
  bool require_min_size = true;
};

/// Empty result iff every ReviewTable invariant holds.
std::vector<Violation> validate_table(const ReviewTable& table, ValidateOptions options = {});

}  // namespace digesttab
