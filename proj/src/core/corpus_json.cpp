#include "digesttab/core/corpus_json.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "digesttab/core/error.hpp"
#include "digesttab/core/text.hpp"

namespace fs = std::filesystem;

namespace digesttab {

namespace {

constexpr std::string_view kCitePrefix = "{{cite:";
constexpr std::string_view kCiteSuffix = "}}";

std::string str_field(const ojson& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw ValidationError(where + ": missing string field '" + key + "'");
  }
  return text::nfc(j.at(key).get<std::string>());
}

std::optional<std::string> opt_field(const ojson& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_string()) throw ValidationError(std::string("field '") + key + "' must be a string or null");
  return text::nfc(j.at(key).get<std::string>());
}

std::string value_text(const ojson& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

ojson opt_json(const std::optional<std::string>& s) {
  return s ? ojson(*s) : ojson(nullptr);
}

}  // namespace

std::string unwrap_cite_marker(std::string_view s) {
  if (s.size() > kCitePrefix.size() + kCiteSuffix.size() && s.substr(0, kCitePrefix.size()) == kCitePrefix &&
      s.substr(s.size() - kCiteSuffix.size()) == kCiteSuffix) {
    return std::string(s.substr(kCitePrefix.size(), s.size() - kCitePrefix.size() - kCiteSuffix.size()));
  }
  return std::string(s);
}

std::string wrap_cite_marker(std::string_view cite_id) {
  return std::string(kCitePrefix) + std::string(cite_id) + std::string(kCiteSuffix);
}

ReviewTable parse_table(const ojson& j) {
  if (!j.is_object()) throw ValidationError("table JSON must be an object");
  ReviewTable t;
  t.table_id = str_field(j, "table_id", "table");
  const std::string where = "table " + t.table_id;
  t.source_paper_id = opt_field(j, "paper_id");
  t.caption = opt_field(j, "caption");

  if (j.contains("in_text_references") && !j.at("in_text_references").is_null()) {
    for (const auto& r : j.at("in_text_references")) {
      t.in_text_refs.push_back({str_field(r, "section", where), str_field(r, "text", where)});
    }
  }

  if (!j.contains("table") || !j.at("table").is_object()) {
    throw ValidationError(where + ": missing 'table' object");
  }
  const auto& body = j.at("table");
  if (!body.contains(kReferencesColumn) || !body.at(kReferencesColumn).is_array()) {
    throw ValidationError(where + ": 'table' lacks a References list");
  }
  for (const auto& ref : body.at(kReferencesColumn)) {
    t.row_keys.push_back(text::nfc(unwrap_cite_marker(value_text(ref))));
  }
  for (const auto& [key, values] : body.items()) {
    if (key == kReferencesColumn) continue;
    if (!values.is_array() || values.size() != t.row_keys.size()) {
      throw ValidationError(where + ": column '" + key + "' is not a list with one value per row");
    }
    std::string aspect = text::nfc(key);
    t.aspects.push_back(aspect);
    for (std::size_t i = 0; i < values.size(); ++i) {
      t.set_cell(t.row_keys[i], aspect, CellValue::of(text::nfc(value_text(values[i]))));
    }
  }

  if (j.contains("citation_info") && !j.at("citation_info").is_null()) {
    for (const auto& c : j.at("citation_info")) {
      PaperRecord p;
      p.cite_id = text::nfc(unwrap_cite_marker(str_field(c, "cite_id", where)));
      p.external_id = opt_field(c, "external_id");
      p.title = str_field(c, "title", where);
      p.abstract = opt_field(c, "abstract");
      p.full_text = opt_field(c, "full_text");
      t.papers.push_back(std::move(p));
    }
  }
  if (j.contains("provenance") && j.at("provenance").is_object()) {
    t.provenance = j.at("provenance");
  }
  return t;
}

ojson serialize_table(const ReviewTable& t) {
  ojson j = ojson::object();
  j["table_id"] = t.table_id;
  j["paper_id"] = opt_json(t.source_paper_id);
  j["caption"] = opt_json(t.caption);
  ojson refs = ojson::array();
  for (const auto& r : t.in_text_refs) {
    ojson o = ojson::object();
    o["section"] = r.section;
    o["text"] = r.text;
    refs.push_back(std::move(o));
  }
  j["in_text_references"] = std::move(refs);

  ojson body = ojson::object();
  ojson keys = ojson::array();
  for (const auto& r : t.row_keys) keys.push_back(wrap_cite_marker(r));
  body[kReferencesColumn] = std::move(keys);
  for (const auto& a : t.aspects) {
    ojson col = ojson::array();
    for (const auto& r : t.row_keys) col.push_back(t.cell(r, a).text());
    body[a] = std::move(col);
  }
  j["table"] = std::move(body);

  ojson info = ojson::array();
  for (const auto& p : t.papers) {
    ojson o = ojson::object();
    o["cite_id"] = p.cite_id;
    if (p.external_id) o["external_id"] = *p.external_id;
    o["title"] = p.title;
    o["abstract"] = opt_json(p.abstract);
    o["full_text"] = opt_json(p.full_text);
    info.push_back(std::move(o));
  }
  j["citation_info"] = std::move(info);
  if (!t.provenance.empty()) j["provenance"] = t.provenance;
  return j;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  static std::atomic<unsigned long> counter{0};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "." +
         std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot rename into " + path.string() + ": " + ec.message());
  }
}

namespace {

bool looks_like_table(const ojson& j) {
  return j.is_object() && j.contains("table_id") && j.contains("table");
}

void load_file(const fs::path& file, std::vector<ReviewTable>& out) {
  const std::string body = read_file(file);
  try {
    if (file.extension() == ".jsonl") {
      std::istringstream lines(body);
      std::string line;
      while (std::getline(lines, line)) {
        if (text::is_blank(line)) continue;
        auto j = ojson::parse(line);
        if (looks_like_table(j)) out.push_back(parse_table(j));
      }
      return;
    }
    auto j = ojson::parse(body);
    if (j.is_array()) {
      for (const auto& e : j) {
        if (looks_like_table(e)) out.push_back(parse_table(e));
      }
    } else if (looks_like_table(j)) {
      out.push_back(parse_table(j));
    }
  } catch (const ojson::parse_error& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }
}

}  // namespace

std::vector<ReviewTable> load_corpus(const fs::path& path) {
  std::vector<ReviewTable> out;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path)) {
      if (!e.is_regular_file()) continue;
      auto ext = e.path().extension();
      if (ext == ".json" || ext == ".jsonl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) load_file(f, out);
  } else if (fs::exists(path)) {
    load_file(path, out);
  } else {
    throw IoError("corpus path does not exist: " + path.string());
  }
  return out;
}

void write_corpus_jsonl(const fs::path& path, const std::vector<ReviewTable>& tables) {
  std::string body;
  for (const auto& t : tables) {
    body += serialize_table(t).dump();
    body += '\n';
  }
  write_file_atomic(path, body);
}

void write_table_json(const fs::path& path, const ReviewTable& table) {
  write_file_atomic(path, serialize_table(table).dump(2) + "\n");
}

}  // namespace digesttab
