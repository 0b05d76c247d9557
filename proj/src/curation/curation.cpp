#include "digesttab/curation/curation.hpp"

#include <algorithm>
#include <regex>
#include <set>
#include <thread>

#include "digesttab/core/hash.hpp"
#include "digesttab/core/parallel.hpp"
#include "digesttab/core/text.hpp"

namespace digesttab::curation {

const char* to_string(Stage stage) {
  switch (stage) {
    case Stage::Prefilter: return "prefilter";
    case Stage::Parse: return "parse";
    case Stage::Metadata: return "metadata";
    case Stage::Grounding: return "grounding";
    case Stage::Final: return "final";
  }
  return "?";
}

const char* to_string(Strictness s) { return s == Strictness::High ? "high" : "medium"; }

Strictness strictness_from_string(const std::string& s) {
  auto v = text::casefold(s);
  if (v == "high") return Strictness::High;
  if (v == "medium") return Strictness::Medium;
  throw ValidationError("strictness must be 'high' or 'medium', got '" + s + "'");
}

void FilterVerdict::fail(const std::string& filter_id) {
  passed = false;
  failed_filters.push_back(filter_id);
}

namespace {

const std::regex& cite_marker_re() {
  static const std::regex re(R"(\{\{cite:([^}]*)\}\})");
  return re;
}

std::vector<std::string> cite_markers(const std::string& s) {
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), cite_marker_re()); it != std::sregex_iterator(); ++it) {
    out.push_back(text::trim((*it)[1].str()));
  }
  return out;
}

bool has_cite_marker(const std::string& s) { return s.find("{{cite:") != std::string::npos; }

std::string remove_cite_markers(const std::string& s) {
  return text::collapse_whitespace(std::regex_replace(s, cite_marker_re(), " "));
}

ojson dropped_row(std::optional<std::size_t> index, const std::string& key, const char* filter, Stage stage) {
  ojson j;
  if (index) j["row_index"] = *index;
  j["row"] = key.empty() ? ojson(nullptr) : ojson(key);
  j["filter"] = filter;
  j["stage"] = to_string(stage);
  return j;
}

ojson dropped_column(const std::string& aspect, const char* filter, Stage stage) {
  return ojson{{"aspect", aspect}, {"filter", filter}, {"stage", to_string(stage)}};
}

void append_provenance(ReviewTable& t, const char* key, ojson entry) {
  if (!t.provenance.contains(key)) t.provenance[key] = ojson::array();
  t.provenance[key].push_back(std::move(entry));
}

std::vector<std::string> provenance_list(const ReviewTable& t, const char* key) {
  std::vector<std::string> out;
  if (t.provenance.contains(key)) {
    for (const auto& v : t.provenance[key]) out.push_back(v.get<std::string>());
  }
  return out;
}

std::size_t provenance_count(const ReviewTable& t, const char* key) {
  return t.provenance.contains(key) ? t.provenance[key].get<std::size_t>() : 0;
}

struct GridInfo {
  Grid grid;
  std::size_t header_rows = 0;
  std::vector<std::size_t> citation_columns;  // columns holding markers in data rows
  std::set<std::string> citations;
};

GridInfo analyze(const std::string& xml, XmlTable* tokens_out = nullptr) {
  XmlTable tokens = tokenize_table(xml);
  GridInfo info;
  info.grid = expand_spans(tokens);
  const auto& g = info.grid;
  while (info.header_rows < g.rows.size() && g.header_row[info.header_rows]) ++info.header_rows;
  if (info.header_rows == 0 && !g.rows.empty()) info.header_rows = 1;
  std::set<std::size_t> cols;
  for (std::size_t r = info.header_rows; r < g.rows.size(); ++r) {
    for (std::size_t c = 0; c < g.rows[r].size(); ++c) {
      if (!has_cite_marker(g.rows[r][c].text)) continue;
      cols.insert(c);
      for (auto& m : cite_markers(g.rows[r][c].text)) info.citations.insert(m);
    }
  }
  info.citation_columns.assign(cols.begin(), cols.end());
  if (tokens_out) *tokens_out = std::move(tokens);
  return info;
}

}  // namespace

FilterVerdict prefilter_xml(const RawXmlTable& raw) {
  FilterVerdict v;
  v.table_id = raw.table_id;
  v.stage = Stage::Prefilter;
  auto chars = text::utf8_length(raw.xml);
  XmlTable tokens;
  GridInfo info = analyze(raw.xml, &tokens);
  if (chars < kMinXmlChars || chars > kMaxXmlChars) v.fail(filter::kCharLength);
  if (!tokens.has_cell_tags) v.fail(filter::kNoCellTags);
  if (info.citations.size() < 2) v.fail(filter::kLt2Citations);
  std::size_t data_rows = info.grid.rows.size() - std::min(info.grid.rows.size(), info.header_rows);
  if (data_rows < 2) v.fail(filter::kLt2Rows);
  if (info.grid.width < 2) v.fail(filter::kLt2Cols);
  if (info.citation_columns.size() > 1) v.fail(filter::kMultiColumnCitations);
  return v;
}

std::string strip_citation_text(const std::string& cell) {
  static const std::regex author_year_paren(
      R"(\s*\((?:[^()]*\bet al\b\.?[^()]*|[^()]*\b(?:19|20)\d{2}[a-z]?\b[^()]*)\))", std::regex::icase);
  static const std::regex numeric_brackets(R"(\s*\[\s*\d+(?:\s*[,-]\s*\d+)*\s*\])");
  static const std::regex et_al(
      R"((?:\b[A-Z][\w'\-]*(?:\s+(?:and|&)\s+[A-Z][\w'\-]*)?\s+)?\bet al\b\.?(?:\s*,?\s*\(?(?:19|20)\d{2}[a-z]?\)?)?)",
      std::regex::icase);
  static const std::regex empty_brackets(R"(\(\s*[,;]?\s*\)|\[\s*[,;]?\s*\])");
  std::string s = std::regex_replace(cell, cite_marker_re(), " ");
  s = std::regex_replace(s, author_year_paren, "");
  s = std::regex_replace(s, numeric_brackets, "");
  s = std::regex_replace(s, et_al, "");
  s = std::regex_replace(s, empty_brackets, "");
  s = text::collapse_whitespace(s);
  auto is_trailing_punct = [](char c) { return c == ',' || c == ';' || c == ':'; };
  while (!s.empty() && is_trailing_punct(s.back())) s.pop_back();
  while (!s.empty() && is_trailing_punct(s.front())) s.erase(s.begin());
  return text::trim(s);
}

const std::vector<std::string>& math_symbol_set() {
  static const std::vector<std::string> symbols = {"±", "≤", "≥", "×", "÷", "∞", "∑", "∏", "∫", "√", "≈",
                                                   "≠", "∈", "∀", "∃", "∂", "∇", "→", "⇒", "∝", "∼"};
  return symbols;
}

bool looks_like_math_or_float(const std::string& cell) {
  static const std::regex decimal(R"(\d\.\d|(^|[^\w.])\.\d)");
  static const std::regex scientific(R"(\d[eE][+\-]?\d)");
  static const std::regex latex_command(R"(\\([A-Za-z]+))");
  static const std::set<std::string> harmless_commands = {"checkmark", "cmark", "xmark", "ding", "textbf", "textit",
                                                          "emph", "texttt", "textsc", "url", "cite", "citep", "citet"};
  std::string t = text::trim(cell);
  if (t.empty()) return false;
  // a lone "×" is a boolean mark (like ✗), not multiplication
  if (t == "×") return false;
  if (t.find("{{formula:") != std::string::npos) return true;
  if (t.find('$') != std::string::npos || t.find("\\(") != std::string::npos || t.find("\\[") != std::string::npos) {
    return true;
  }
  if (std::regex_search(t, decimal) || std::regex_search(t, scientific)) return true;
  for (auto it = std::sregex_iterator(t.begin(), t.end(), latex_command); it != std::sregex_iterator(); ++it) {
    if (!harmless_commands.contains((*it)[1].str())) return true;
  }
  for (const auto& sym : math_symbol_set()) {
    if (t.find(sym) != std::string::npos) return true;
  }
  for (char32_t cp : text::code_points(t)) {
    if ((cp >= 0x0391 && cp <= 0x03A9) || (cp >= 0x03B1 && cp <= 0x03C9)) return true;
  }
  return false;
}

ReviewTable parse_xml_table(const RawXmlTable& raw) {
  GridInfo info;
  try {
    info = analyze(raw.xml);
  } catch (const MalformedXml& e) {
    throw ParseFailure(filter::kMalformedXml, e.what());
  }
  const Grid& g = info.grid;
  const std::size_t h = info.header_rows;
  if (h > 2) throw ParseFailure(filter::kTooManyHeaderRows, std::to_string(h) + " header rows");
  if (info.citation_columns.size() > 1) {
    throw ParseFailure(filter::kMultiColumnCitations, "citations in more than one column");
  }
  if (info.citation_columns.empty()) throw ParseFailure(filter::kLt2Citations, "no citation markers in data rows");
  const std::size_t width = g.width;
  const std::size_t cite_col = info.citation_columns.front();

  ReviewTable t;
  t.table_id = raw.table_id;
  t.source_paper_id = raw.source_paper_id;
  t.caption = raw.caption;
  t.in_text_refs = raw.in_text_refs;
  t.provenance["header_rows"] = h;
  t.provenance["merged_header"] = h >= 2;

  // header names, uppermost first, skipping a part equal to the one above it
  std::vector<std::string> names(width);
  for (std::size_t c = 0; c < width; ++c) {
    std::vector<std::string> parts;
    for (std::size_t r = 0; r < h && r < g.rows.size(); ++r) {
      if (c >= g.rows[r].size()) continue;
      std::string part = remove_cite_markers(g.rows[r][c].text);
      if (part.empty() || (!parts.empty() && parts.back() == part)) continue;
      parts.push_back(part);
    }
    names[c] = text::join(parts, " ");
  }

  struct Row {
    std::string key;
    std::vector<std::string> cells;
  };
  std::vector<Row> rows;
  std::set<std::string> seen_keys;
  std::size_t citation_free = 0;
  ojson extra_citations = ojson::object();
  std::vector<bool> math_col(width, false), figure_col(width, false);

  for (std::size_t r = h; r < g.rows.size(); ++r) {
    const auto& slots = g.rows[r];
    if (g.header_row[r]) {
      append_provenance(t, "dropped_rows", dropped_row(r, "", filter::kInteriorHeaderRow, Stage::Parse));
      continue;
    }
    bool ragged = slots.size() != width ||
                  std::any_of(slots.begin(), slots.end(), [](const GridSlot& s) { return !s.filled; });
    if (ragged) {
      append_provenance(t, "dropped_rows", dropped_row(r, "", filter::kRaggedRow, Stage::Parse));
      continue;
    }
    auto markers = cite_markers(slots[cite_col].text);
    markers.erase(std::remove(markers.begin(), markers.end(), std::string()), markers.end());
    Row row;
    if (markers.empty()) {
      ++citation_free;
      if (citation_free > 1) {
        append_provenance(t, "dropped_rows", dropped_row(r, "", filter::kExtraCitationFreeRow, Stage::Parse));
        continue;
      }
      row.key = raw.source_paper_id;
      t.provenance["citation_free_row"] = raw.source_paper_id;
    } else {
      row.key = markers.front();
      if (markers.size() > 1) {
        for (std::size_t k = 1; k < markers.size(); ++k) extra_citations[row.key].push_back(markers[k]);
      }
    }
    for (std::size_t c = 0; c < width; ++c) {
      row.cells.push_back(c == cite_col ? strip_citation_text(slots[c].text) : remove_cite_markers(slots[c].text));
    }
    if (seen_keys.contains(row.key)) {
      auto prev = std::find_if(rows.begin(), rows.end(), [&](const Row& x) { return x.key == row.key; });
      bool same = prev != rows.end() && prev->cells == row.cells;
      append_provenance(t, "dropped_rows",
                        dropped_row(r, row.key, same ? filter::kDuplicateRow : filter::kDuplicateRowKey, Stage::Parse));
      continue;
    }
    for (std::size_t c = 0; c < width; ++c) {
      math_col[c] = math_col[c] || slots[c].math;
      figure_col[c] = figure_col[c] || slots[c].figure;
    }
    seen_keys.insert(row.key);
    rows.push_back(std::move(row));
  }
  t.provenance["citation_free_rows"] = citation_free;
  if (!extra_citations.empty()) t.provenance["extra_citations"] = extra_citations;

  // keep non-empty columns; give every kept column a unique, legal aspect name
  std::vector<std::size_t> kept;
  for (std::size_t c = 0; c < width; ++c) {
    bool all_empty = std::all_of(rows.begin(), rows.end(), [&](const Row& x) { return text::is_blank(x.cells[c]); });
    if (all_empty) {
      std::string label = names[c].empty() ? "Column " + std::to_string(c + 1) : names[c];
      append_provenance(t, "dropped_columns", dropped_column(label, filter::kEmptyColumn, Stage::Parse));
      continue;
    }
    kept.push_back(c);
  }
  std::set<std::string> used;
  std::vector<std::string> aspect_of(width);
  for (std::size_t c : kept) {
    std::string name = names[c].empty() ? "Column " + std::to_string(c + 1) : names[c];
    if (text::casefold(name) == text::casefold(kReferencesColumn)) name += " (column)";
    std::string unique = name;
    for (int k = 2; used.contains(unique); ++k) unique = name + " (" + std::to_string(k) + ")";
    used.insert(unique);
    aspect_of[c] = unique;
    t.aspects.push_back(unique);
    if (math_col[c]) append_provenance(t, "math_aspects", unique);
    if (figure_col[c]) append_provenance(t, "figure_aspects", unique);
  }
  for (auto& row : rows) {
    t.row_keys.push_back(row.key);
    for (std::size_t c : kept) t.set_cell(row.key, aspect_of[c], CellValue::of(row.cells[c]));
  }

  if (t.num_rows() < 2) throw ParseFailure(filter::kLt2Rows, "fewer than two parseable rows");
  if (t.num_aspects() < 2) throw ParseFailure(filter::kLt2Cols, "fewer than two non-empty aspect columns");
  if (auto violations = validate_table(t); !violations.empty()) {
    throw ParseFailure(filter::kInvalidTable, violations.front().kind + ": " + violations.front().message);
  }
  return t;
}

namespace {

void prune_papers(ReviewTable& t) {
  std::set<std::string> keys(t.row_keys.begin(), t.row_keys.end());
  std::erase_if(t.papers, [&](const PaperRecord& p) { return !keys.contains(p.cite_id); });
}

void check_size(ReviewTable& t, FilterVerdict& v) {
  if (t.num_rows() < 2) v.fail(filter::kLt2Rows);
  if (t.num_aspects() < 2) v.fail(filter::kLt2Cols);
}

}  // namespace

StageResult enrich_metadata(ReviewTable table, MetadataResolver& resolver,
                            const std::map<std::string, std::string>& bibliography, const ResolvePolicy& policy) {
  StageResult out;
  out.verdict.table_id = table.table_id;
  out.verdict.stage = Stage::Metadata;
  auto sleep = policy.sleeper ? policy.sleeper : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };

  auto keys = table.row_keys;
  for (const auto& key : keys) {
    auto bib_it = bibliography.find(key);
    const std::string bib = bib_it == bibliography.end() ? "" : bib_it->second;
    std::optional<PaperRecord> rec;
    for (int attempt = 1;; ++attempt) {
      try {
        rec = resolver.resolve(key, bib);
        break;
      } catch (const ResolverUnavailable&) {
        if (attempt >= std::max(1, policy.attempts)) throw;
        sleep(policy.backoff_base * (1 << (attempt - 1)));
      }
    }
    const char* drop = nullptr;
    if (!rec) {
      drop = filter::kMetadataNotFound;
    } else if (text::is_blank(rec->title) || !rec->abstract || text::is_blank(*rec->abstract)) {
      drop = filter::kMetadataIncomplete;
    }
    if (drop) {
      table.remove_row(key);
      append_provenance(table, "dropped_rows", dropped_row(std::nullopt, key, drop, Stage::Metadata));
      continue;
    }
    rec->cite_id = key;
    table.upsert_paper(std::move(*rec));
  }
  prune_papers(table);
  if (table.num_rows() < 2) out.verdict.fail(filter::kLt2MatchedCitations);
  out.table = std::move(table);
  return out;
}

StageResult ground_to_fulltext(ReviewTable table, Strictness strictness) {
  StageResult out;
  out.verdict.table_id = table.table_id;
  out.verdict.stage = Stage::Grounding;
  auto math_markup = provenance_list(table, "math_aspects");
  auto figure_markup = provenance_list(table, "figure_aspects");
  auto aspects = table.aspects;
  for (const auto& a : aspects) {
    const char* drop = nullptr;
    if (std::find(figure_markup.begin(), figure_markup.end(), a) != figure_markup.end()) {
      drop = filter::kFigure;
    } else if (std::find(math_markup.begin(), math_markup.end(), a) != math_markup.end()) {
      drop = filter::kMathOrFloat;
    } else {
      auto col = table.column(a);
      if (std::any_of(col.begin(), col.end(), [](const CellValue& v) { return looks_like_math_or_float(v.text()); })) {
        drop = filter::kMathOrFloat;
      }
    }
    if (drop) {
      table.remove_aspect(a);
      append_provenance(table, "dropped_columns", dropped_column(a, drop, Stage::Grounding));
    }
  }
  if (strictness == Strictness::High) {
    auto keys = table.row_keys;
    for (const auto& key : keys) {
      const auto* p = table.paper(key);
      if (p && p->full_text && !text::is_blank(*p->full_text)) continue;
      table.remove_row(key);
      append_provenance(table, "dropped_rows", dropped_row(std::nullopt, key, filter::kNoFullText, Stage::Grounding));
    }
    prune_papers(table);
  }
  check_size(table, out.verdict);
  out.table = std::move(table);
  return out;
}

std::string DuplicateIndex::signature(const ReviewTable& table, bool normalized) {
  auto norm = [&](const std::string& s) { return normalized ? text::normalize_for_match(s) : s; };
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& a : table.aspects) {
    nlohmann::json col = nlohmann::json::array({norm(a)});
    for (const auto& v : table.column(a)) col.push_back(norm(v.text()));
    cols.push_back(std::move(col));
  }
  return sha256_hex(cols.dump());
}

void DuplicateIndex::add(const ReviewTable& table) {
  auto sig = signature(table, true);
  auto strict = signature(table, false);
  auto [it, inserted] = first_by_sig_.emplace(sig, table.table_id);
  strict_first_by_sig_.emplace(table.table_id, strict);
  if (!inserted && it->second != table.table_id) {
    dup_[table.table_id] = {it->second, strict_first_by_sig_.at(it->second) == strict};
  }
}

std::optional<std::string> DuplicateIndex::duplicate_of(const std::string& table_id) const {
  auto it = dup_.find(table_id);
  if (it == dup_.end()) return std::nullopt;
  return it->second.first;
}

bool DuplicateIndex::strict_match(const std::string& table_id) const {
  auto it = dup_.find(table_id);
  return it != dup_.end() && it->second.second;
}

FilterVerdict final_filter(ReviewTable& table, Strictness strictness, const DuplicateIndex& duplicates) {
  FilterVerdict v;
  v.table_id = table.table_id;
  v.stage = Stage::Final;
  const bool merged = table.provenance.contains("merged_header") && table.provenance["merged_header"].get<bool>();
  const std::size_t citation_free = provenance_count(table, "citation_free_rows");
  if (strictness == Strictness::High) {
    if (merged) v.fail(filter::kMergedHeader);
    if (citation_free > 0) v.fail(filter::kCitationFreeRow);
    if (table.in_text_refs.empty()) v.fail(filter::kNoInTextRefs);
  } else if (citation_free > 1) {
    v.fail(filter::kCitationFreeRow);
  }
  if (duplicates.duplicate_of(table.table_id)) v.fail(filter::kDuplicateTable);
  // Row keys are unique after parsing, so duplicate rows (citation included) were already removed there.
  std::string free_key =
      table.provenance.contains("citation_free_row") ? table.provenance["citation_free_row"].get<std::string>() : "";
  auto cited = std::count_if(table.row_keys.begin(), table.row_keys.end(),
                             [&](const std::string& k) { return free_key.empty() || k != free_key; });
  if (cited < 2) v.fail(filter::kLt2Citations);
  check_size(table, v);
  return v;
}

ojson FunnelReport::to_json() const {
  ojson j;
  ojson st = ojson::object();
  for (Stage s : {Stage::Prefilter, Stage::Parse, Stage::Metadata, Stage::Grounding, Stage::Final}) {
    StageCount c;
    if (auto it = stages.find(s); it != stages.end()) c = it->second;
    ojson d = ojson::object();
    for (const auto& [f, n] : c.dropped_by_filter) d[f] = n;
    st[to_string(s)] = ojson{{"in", c.in}, {"out", c.out}, {"dropped_by_filter", d}};
  }
  j["stages"] = st;
  ojson tables = ojson::array();
  for (const auto& v : verdicts) {
    tables.push_back(ojson{{"table_id", v.table_id},
                           {"passed", v.passed},
                           {"stage", to_string(v.stage)},
                           {"failed_filters", v.failed_filters}});
  }
  j["tables"] = tables;
  j["dropped_rows"] = dropped_rows;
  j["dropped_columns"] = dropped_columns;
  j["duplicates"] = duplicates;
  ojson notes;
  notes["char_length"] = "code points of the table XML, caption excluded; bounds [" + std::to_string(kMinXmlChars) +
                         ", " + std::to_string(kMaxXmlChars) + "]";
  notes["math_symbols"] = math_symbol_set();
  notes["math_patterns"] = {"decimal numeral", "scientific notation", "$ or \\( or \\[", "LaTeX command",
                            "{{formula:..}} marker", "Greek letter"};
  notes["duplicate_match"] = "whitespace and case normalized; see duplicates[].strict_match for the unnormalized variant";
  j["notes"] = notes;
  return j;
}

std::vector<RawXmlTable> load_raw_tables(const std::filesystem::path& input_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(input_dir)) throw IoError("input directory not found: " + input_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(input_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".xml") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RawXmlTable> out;
  for (const auto& f : files) {
    RawXmlTable raw;
    raw.table_id = f.stem().string();
    raw.xml = read_file(f);
    auto sidecar = fs::path(f).replace_extension(".json");
    if (fs::is_regular_file(sidecar)) {
      ojson j;
      try {
        j = ojson::parse(read_file(sidecar));
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError("sidecar " + sidecar.string() + " is not valid JSON: " + e.what());
      }
      auto str = [&](const char* key) -> std::optional<std::string> {
        if (!j.contains(key) || j[key].is_null()) return std::nullopt;
        return text::nfc(j[key].get<std::string>());
      };
      if (auto id = str("table_id")) raw.table_id = *id;
      if (auto pid = str("paper_id")) raw.source_paper_id = *pid;
      raw.caption = str("caption");
      if (j.contains("in_text_references")) {
        for (const auto& r : j["in_text_references"]) {
          raw.in_text_refs.push_back({text::nfc(r.value("section", "")), text::nfc(r.value("text", ""))});
        }
      }
      if (j.contains("bibliography")) {
        for (const auto& [marker, bib] : j["bibliography"].items()) {
          raw.bibliography[unwrap_cite_marker(marker)] = text::nfc(bib.get<std::string>());
        }
      }
    }
    if (raw.source_paper_id.empty()) raw.source_paper_id = raw.table_id + "/source";
    out.push_back(std::move(raw));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.table_id < b.table_id; });
  return out;
}

void write_raw_table(const std::filesystem::path& dir, const RawXmlTable& raw) {
  std::filesystem::create_directories(dir);
  std::string stem = raw.table_id;
  std::replace_if(stem.begin(), stem.end(), [](char c) { return c == '/' || c == '\\' || c == ':'; }, '_');
  write_file_atomic(dir / (stem + ".xml"), raw.xml);
  ojson j;
  j["table_id"] = raw.table_id;
  j["paper_id"] = raw.source_paper_id;
  j["caption"] = raw.caption ? ojson(*raw.caption) : ojson(nullptr);
  j["in_text_references"] = ojson::array();
  for (const auto& r : raw.in_text_refs) j["in_text_references"].push_back({{"section", r.section}, {"text", r.text}});
  j["bibliography"] = ojson::object();
  for (const auto& [k, v] : raw.bibliography) j["bibliography"][wrap_cite_marker(k)] = v;
  write_file_atomic(dir / (stem + ".json"), j.dump(2) + "\n");
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

RawXmlTable to_raw_xml(const ReviewTable& table) {
  RawXmlTable raw;
  raw.table_id = table.table_id;
  raw.source_paper_id = table.source_paper_id.value_or(table.table_id + "/source");
  raw.caption = table.caption;
  raw.in_text_refs = table.in_text_refs;
  std::string free_key =
      table.provenance.contains("citation_free_row") ? table.provenance["citation_free_row"].get<std::string>() : "";

  std::string x = "<table class=\"ltx_tabular ltx_guessed_headers ltx_align_middle\" id=\"" +
                  xml_escape(table.table_id) + "\">\n  <thead class=\"ltx_thead\">\n    <tr class=\"ltx_tr\">\n";
  auto header_cell = [](const std::string& s) {
    return "      <th class=\"ltx_td ltx_th ltx_th_column ltx_align_left ltx_border_t\">" + xml_escape(s) + "</th>\n";
  };
  x += header_cell(kReferencesColumn);
  for (const auto& a : table.aspects) x += header_cell(a);
  x += "    </tr>\n  </thead>\n  <tbody class=\"ltx_tbody\">\n";
  for (const auto& key : table.row_keys) {
    x += "    <tr class=\"ltx_tr\">\n      <td class=\"ltx_td ltx_align_left\">";
    if (key != free_key) x += "<cite class=\"ltx_cite ltx_citemacro_cite\" ref=\"" + xml_escape(key) + "\"/>";
    x += "</td>\n";
    for (const auto& a : table.aspects) {
      x += "      <td class=\"ltx_td ltx_align_left\">" + xml_escape(table.cell(key, a).text()) + "</td>\n";
    }
    x += "    </tr>\n";
  }
  x += "  </tbody>\n</table>\n";
  raw.xml = std::move(x);
  return raw;
}

PipelineResult run_pipeline(const std::vector<RawXmlTable>& input, Strictness strictness, MetadataResolver& resolver,
                            const PipelineOptions& options) {
  std::vector<const RawXmlTable*> raws;
  for (const auto& r : input) raws.push_back(&r);
  std::stable_sort(raws.begin(), raws.end(), [](auto* a, auto* b) { return a->table_id < b->table_id; });

  struct Slot {
    std::optional<ReviewTable> table;
    FilterVerdict verdict;
  };
  std::vector<Slot> slots(raws.size());

  parallel_for(raws.size(), options.workers, [&](std::size_t i) {
    const RawXmlTable& raw = *raws[i];
    auto& slot = slots[i];
    try {
      slot.verdict = prefilter_xml(raw);
    } catch (const MalformedXml&) {
      slot.verdict = FilterVerdict{raw.table_id, true, {}, Stage::Prefilter};
      slot.verdict.fail(filter::kMalformedXml);
    }
    if (!slot.verdict.passed) return;
    try {
      slot.table = parse_xml_table(raw);
      slot.verdict.stage = Stage::Parse;
    } catch (const ParseFailure& e) {
      slot.verdict = FilterVerdict{raw.table_id, true, {}, Stage::Parse};
      slot.verdict.fail(e.filter_id());
    }
  });

  DuplicateIndex dups;
  for (const auto& s : slots) {
    if (s.table) dups.add(*s.table);
  }

  parallel_for(raws.size(), options.workers, [&](std::size_t i) {
    auto& slot = slots[i];
    if (!slot.table) return;
    auto enriched = enrich_metadata(std::move(*slot.table), resolver, raws[i]->bibliography, options.resolve_policy);
    slot.table = std::move(enriched.table);
    slot.verdict = enriched.verdict;
    if (!slot.verdict.passed) return;
    auto grounded = ground_to_fulltext(std::move(*slot.table), strictness);
    slot.table = std::move(grounded.table);
    slot.verdict = grounded.verdict;
    if (!slot.verdict.passed) return;
    slot.verdict = final_filter(*slot.table, strictness, dups);
  });

  PipelineResult result;
  auto& funnel = result.funnel;
  const Stage order[] = {Stage::Prefilter, Stage::Parse, Stage::Metadata, Stage::Grounding, Stage::Final};
  for (Stage s : order) funnel.stages[s];
  for (std::size_t i = 0; i < slots.size(); ++i) {
    auto& slot = slots[i];
    for (Stage s : order) {
      auto& c = funnel.stages[s];
      ++c.in;
      if (s == slot.verdict.stage && !slot.verdict.passed) {
        ++c.dropped_by_filter[slot.verdict.failed_filters.front()];
        break;
      }
      ++c.out;
    }
    funnel.verdicts.push_back(slot.verdict);
    if (slot.table) {
      auto& t = *slot.table;
      for (const char* key : {"dropped_rows", "dropped_columns"}) {
        if (!t.provenance.contains(key)) continue;
        for (auto entry : t.provenance[key]) {
          ojson e{{"table_id", t.table_id}};
          for (auto& [k, v] : entry.items()) e[k] = v;
          (std::string(key) == "dropped_rows" ? funnel.dropped_rows : funnel.dropped_columns).push_back(e);
        }
      }
      if (auto rep = dups.duplicate_of(t.table_id)) {
        funnel.duplicates.push_back(
            {{"table_id", t.table_id}, {"duplicate_of", *rep}, {"strict_match", dups.strict_match(t.table_id)}});
      }
      if (slot.verdict.passed) {
        t.provenance["strictness"] = to_string(strictness);
        result.corpus.push_back(std::move(t));
      }
    }
  }
  return result;
}

PipelineResult run_pipeline(const std::filesystem::path& input_dir, Strictness strictness, MetadataResolver& resolver,
                            const PipelineOptions& options) {
  return run_pipeline(load_raw_tables(input_dir), strictness, resolver, options);
}

}  // namespace digesttab::curation
