#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "digesttab/core/corpus_json.hpp"
#include "digesttab/core/error.hpp"
#include "digesttab/core/model.hpp"
#include "digesttab/curation/resolver.hpp"
#include "digesttab/curation/xml_table.hpp"

namespace digesttab::curation {

namespace filter {
inline constexpr const char* kMalformedXml = "malformed-xml";
inline constexpr const char* kCharLength = "char-length";
inline constexpr const char* kNoCellTags = "no-cell-tags";
inline constexpr const char* kLt2Citations = "lt2-citations";
inline constexpr const char* kLt2Rows = "lt2-rows";
inline constexpr const char* kLt2Cols = "lt2-cols";
inline constexpr const char* kMultiColumnCitations = "multi-column-citations";
inline constexpr const char* kTooManyHeaderRows = "too-many-header-rows";
inline constexpr const char* kInvalidTable = "invalid-table";
inline constexpr const char* kLt2MatchedCitations = "lt2-matched-citations";
inline constexpr const char* kMathOrFloat = "math-or-float";
inline constexpr const char* kFigure = "figure";
inline constexpr const char* kNoFullText = "no-full-text";
inline constexpr const char* kMergedHeader = "merged-header";
inline constexpr const char* kCitationFreeRow = "citation-free-row";
inline constexpr const char* kNoInTextRefs = "no-in-text-refs";
inline constexpr const char* kDuplicateTable = "duplicate-table";
// row-level
inline constexpr const char* kRaggedRow = "ragged-row";
inline constexpr const char* kInteriorHeaderRow = "interior-header-row";
inline constexpr const char* kExtraCitationFreeRow = "extra-citation-free-row";
inline constexpr const char* kDuplicateRow = "duplicate-row";
inline constexpr const char* kDuplicateRowKey = "duplicate-row-key";
inline constexpr const char* kMetadataNotFound = "metadata-not-found";
inline constexpr const char* kMetadataIncomplete = "metadata-incomplete";
// column-level
inline constexpr const char* kEmptyColumn = "empty-column";
}  // namespace filter

inline constexpr std::size_t kMinXmlChars = 400;
inline constexpr std::size_t kMaxXmlChars = 15000;

struct RawXmlTable {
  std::string table_id;
  std::string source_paper_id;
  std::string xml;
  std::optional<std::string> caption;
  std::vector<InTextReference> in_text_refs;
  std::map<std::string, std::string> bibliography;  // cite marker -> bibliography text
};

enum class Stage { Prefilter, Parse, Metadata, Grounding, Final };
const char* to_string(Stage stage);

struct FilterVerdict {
  std::string table_id;
  bool passed = true;
  std::vector<std::string> failed_filters;
  Stage stage = Stage::Prefilter;

  void fail(const std::string& filter_id);
};

enum class Strictness { High, Medium };
const char* to_string(Strictness s);
Strictness strictness_from_string(const std::string& s);

/// The heuristics could not produce a rectangular row-per-paper table.
class ParseFailure : public Error {
 public:
  ParseFailure(std::string filter_id, const std::string& message)
      : Error(ErrorKind::ParseFailure, message), filter_id_(std::move(filter_id)) {}
  const std::string& filter_id() const noexcept { return filter_id_; }

 private:
  std::string filter_id_;
};

/// Character bounds count code points of the table XML only (caption excluded).
/// Throws MalformedXml if the document cannot be tokenized.
FilterVerdict prefilter_xml(const RawXmlTable& raw);

/// Throws ParseFailure rather than ever returning a table that fails validate_table.
/// Dropped rows and columns are listed under provenance "dropped_rows"/"dropped_columns".
ReviewTable parse_xml_table(const RawXmlTable& raw);

/// Removes citation markers and author-year residue from a citation-column cell,
/// e.g. "BERT (Devlin et al., 2019) {{cite:x}}" -> "BERT".
std::string strip_citation_text(const std::string& cell);

/// True if the cell holds a decimal numeral, LaTeX math, a formula marker, or a math symbol.
bool looks_like_math_or_float(const std::string& cell);

/// Symbols treated as math; reported in the funnel notes.
const std::vector<std::string>& math_symbol_set();

struct ResolvePolicy {
  int attempts = 3;
  std::chrono::milliseconds backoff_base{200};
  std::function<void(std::chrono::milliseconds)> sleeper;  // defaults to std::this_thread::sleep_for
};

struct StageResult {
  ReviewTable table;
  FilterVerdict verdict;
};

/// Looks up every row; rows not found or lacking an abstract are dropped.
/// ResolverUnavailable (after the retry policy) propagates and is not a filter failure.
StageResult enrich_metadata(ReviewTable table, MetadataResolver& resolver,
                            const std::map<std::string, std::string>& bibliography = {},
                            const ResolvePolicy& policy = {});

/// Drops math/float and figure columns; under High also drops rows without full text.
StageResult ground_to_fulltext(ReviewTable table, Strictness strictness = Strictness::High);

/// Exact-duplicate detection over aspect columns (row keys excluded). Cell text is compared
/// after whitespace and case normalization; the strict (unnormalized) match is kept too.
class DuplicateIndex {
 public:
  /// Register tables in a deterministic order; the first table with a signature is its representative.
  void add(const ReviewTable& table);
  /// Representative's table_id if `table_id` duplicates an earlier table.
  std::optional<std::string> duplicate_of(const std::string& table_id) const;
  /// True if the representative also matches without normalization.
  bool strict_match(const std::string& table_id) const;

  static std::string signature(const ReviewTable& table, bool normalized);

 private:
  std::map<std::string, std::string> first_by_sig_;
  std::map<std::string, std::string> strict_first_by_sig_;
  std::map<std::string, std::pair<std::string, bool>> dup_;
};

FilterVerdict final_filter(ReviewTable& table, Strictness strictness, const DuplicateIndex& duplicates);

struct StageCount {
  std::size_t in = 0;
  std::size_t out = 0;
  std::map<std::string, std::size_t> dropped_by_filter;
};

struct FunnelReport {
  std::map<Stage, StageCount> stages;
  std::vector<FilterVerdict> verdicts;  // one per input table, table_id order
  ojson dropped_rows = ojson::array();
  ojson dropped_columns = ojson::array();
  ojson duplicates = ojson::array();

  ojson to_json() const;
};

struct PipelineOptions {
  std::size_t workers = 4;
  ResolvePolicy resolve_policy;
};

struct PipelineResult {
  std::vector<ReviewTable> corpus;
  FunnelReport funnel;
};

/// Loads `<dir>/*.xml` with optional `<stem>.json` sidecars, sorted by table_id.
std::vector<RawXmlTable> load_raw_tables(const std::filesystem::path& input_dir);

void write_raw_table(const std::filesystem::path& dir, const RawXmlTable& raw);

/// Re-serializes a table as verbose table XML with a References column, so that the
/// pipeline can be run again on its own output.
RawXmlTable to_raw_xml(const ReviewTable& table);

PipelineResult run_pipeline(const std::vector<RawXmlTable>& raws, Strictness strictness, MetadataResolver& resolver,
                            const PipelineOptions& options = {});
PipelineResult run_pipeline(const std::filesystem::path& input_dir, Strictness strictness,
                            MetadataResolver& resolver, const PipelineOptions& options = {});

}  // namespace digesttab::curation
