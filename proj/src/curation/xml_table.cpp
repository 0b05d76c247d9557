#include "digesttab/curation/xml_table.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "digesttab/core/text.hpp"

namespace digesttab::curation {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

void append_code_point(std::string& out, unsigned long cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x110000) {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

std::string decode_entities(std::string_view s) {
  static const std::map<std::string, std::string, std::less<>> kNamed = {
      {"amp", "&"}, {"lt", "<"}, {"gt", ">"}, {"quot", "\""}, {"apos", "'"}, {"nbsp", " "}};
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out += s[i];
      continue;
    }
    auto semi = s.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 12) {
      out += '&';
      continue;
    }
    std::string_view name = s.substr(i + 1, semi - i - 1);
    if (!name.empty() && name[0] == '#') {
      unsigned long cp = 0;
      bool ok = name.size() > 1;
      try {
        cp = (name.size() > 1 && (name[1] == 'x' || name[1] == 'X')) ? std::stoul(std::string(name.substr(2)), nullptr, 16)
                                                                      : std::stoul(std::string(name.substr(1)), nullptr, 10);
      } catch (...) {
        ok = false;
      }
      if (ok) {
        append_code_point(out, cp);
        i = semi;
        continue;
      }
    } else if (auto it = kNamed.find(name); it != kNamed.end()) {
      out += it->second;
      i = semi;
      continue;
    }
    out += '&';
  }
  return out;
}

struct Tag {
  std::string name;
  std::map<std::string, std::string> attrs;
  bool closing = false;
  bool self_closing = false;
};

bool is_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == ':' || c == '.';
}

Tag parse_tag(std::string_view body) {
  // body excludes the surrounding '<' and '>'
  Tag tag;
  std::size_t i = 0;
  if (i < body.size() && body[i] == '/') {
    tag.closing = true;
    ++i;
  }
  std::size_t start = i;
  while (i < body.size() && is_name_char(body[i])) ++i;
  if (i == start) throw MalformedXml("tag without a name: <" + std::string(body) + ">");
  tag.name = lower(std::string(body.substr(start, i - start)));
  for (;;) {
    while (i < body.size() && std::isspace(static_cast<unsigned char>(body[i]))) ++i;
    if (i >= body.size()) break;
    if (body[i] == '/') {
      if (i + 1 != body.size()) throw MalformedXml("stray '/' inside tag <" + tag.name + ">");
      tag.self_closing = true;
      break;
    }
    std::size_t an = i;
    while (i < body.size() && is_name_char(body[i])) ++i;
    if (i == an) throw MalformedXml("bad attribute syntax in <" + tag.name + ">");
    std::string attr = lower(std::string(body.substr(an, i - an)));
    while (i < body.size() && std::isspace(static_cast<unsigned char>(body[i]))) ++i;
    if (i >= body.size() || body[i] != '=') {
      tag.attrs[attr] = "";
      continue;
    }
    ++i;
    while (i < body.size() && std::isspace(static_cast<unsigned char>(body[i]))) ++i;
    if (i >= body.size() || (body[i] != '"' && body[i] != '\'')) {
      throw MalformedXml("unquoted attribute value in <" + tag.name + ">");
    }
    char q = body[i++];
    auto end = body.find(q, i);
    if (end == std::string_view::npos) throw MalformedXml("unterminated attribute value in <" + tag.name + ">");
    tag.attrs[attr] = decode_entities(body.substr(i, end - i));
    i = end + 1;
  }
  if (tag.closing && tag.self_closing) throw MalformedXml("tag is both closing and self-closing");
  return tag;
}

bool is_row_tag(const std::string& n) { return n == "tr" || n == "row"; }
bool is_cell_tag(const std::string& n) { return n == "td" || n == "th" || n == "cell" || n == "entry"; }
bool is_void_tag(const std::string& n) { return n == "br" || n == "hr" || n == "img"; }

bool attr_marks_header(const std::map<std::string, std::string>& attrs) {
  if (auto it = attrs.find("class"); it != attrs.end() && it->second.find("ltx_th") != std::string::npos) return true;
  if (auto it = attrs.find("header"); it != attrs.end()) {
    auto v = lower(it->second);
    return v == "true" || v == "yes" || v == "1";
  }
  return false;
}

int span_attr(const std::map<std::string, std::string>& attrs, const char* name) {
  auto it = attrs.find(name);
  if (it == attrs.end()) return 1;
  try {
    int v = std::stoi(it->second);
    return std::clamp(v, 1, 1000);
  } catch (...) {
    return 1;
  }
}

}  // namespace

XmlTable tokenize_table(std::string_view xml) {
  XmlTable table;
  std::vector<std::string> stack;
  int thead_depth = 0;
  bool in_row = false;
  bool row_flagged = false;
  std::size_t row_depth = 0;
  bool in_cell = false;
  std::size_t cell_depth = 0;
  XmlRow row;
  XmlCell cell;
  std::string cell_raw;

  auto flush_cell = [&] {
    cell.text = text::collapse_whitespace(text::nfc(cell_raw));
    row.cells.push_back(std::move(cell));
    cell = XmlCell{};
    cell_raw.clear();
    in_cell = false;
  };
  auto flush_row = [&] {
    row.header = row_flagged || (!row.cells.empty() && std::all_of(row.cells.begin(), row.cells.end(),
                                                                    [](const XmlCell& c) { return c.header; }));
    table.rows.push_back(std::move(row));
    row = XmlRow{};
    in_row = false;
  };

  std::size_t i = 0;
  while (i < xml.size()) {
    if (xml[i] != '<') {
      auto next = xml.find('<', i);
      if (next == std::string_view::npos) next = xml.size();
      if (in_cell) cell_raw += decode_entities(xml.substr(i, next - i));
      i = next;
      continue;
    }
    if (xml.substr(i, 4) == "<!--") {
      auto end = xml.find("-->", i + 4);
      if (end == std::string_view::npos) throw MalformedXml("unterminated comment");
      i = end + 3;
      continue;
    }
    if (xml.substr(i, 9) == "<![CDATA[") {
      auto end = xml.find("]]>", i + 9);
      if (end == std::string_view::npos) throw MalformedXml("unterminated CDATA section");
      if (in_cell) cell_raw += std::string(xml.substr(i + 9, end - i - 9));
      i = end + 3;
      continue;
    }
    if (xml.substr(i, 2) == "<?" || xml.substr(i, 2) == "<!") {
      auto end = xml.find('>', i);
      if (end == std::string_view::npos) throw MalformedXml("unterminated declaration");
      i = end + 1;
      continue;
    }
    auto end = xml.find('>', i);
    if (end == std::string_view::npos) throw MalformedXml("unterminated tag at offset " + std::to_string(i));
    auto next_open = xml.find('<', i + 1);
    if (next_open != std::string_view::npos && next_open < end) {
      throw MalformedXml("'<' inside tag at offset " + std::to_string(i));
    }
    Tag tag = parse_tag(xml.substr(i + 1, end - i - 1));
    i = end + 1;
    if (is_void_tag(tag.name) && !tag.closing) tag.self_closing = true;

    if (tag.closing) {
      if (stack.empty() || stack.back() != tag.name) {
        throw MalformedXml("mismatched </" + tag.name + ">" + (stack.empty() ? "" : " (expected </" + stack.back() + ">)"));
      }
      stack.pop_back();
      if (in_cell && stack.size() == cell_depth) {
        flush_cell();
      } else if (in_row && !in_cell && stack.size() == row_depth) {
        flush_row();
      } else if (tag.name == "thead") {
        --thead_depth;
      }
      continue;
    }

    if (tag.name == "cite") {
      auto it = tag.attrs.find("ref");
      if (it == tag.attrs.end()) it = tag.attrs.find("id");
      if (in_cell && it != tag.attrs.end()) cell_raw += "{{cite:" + it->second + "}}";
    } else if (tag.name == "br" && in_cell) {
      cell_raw += ' ';
    } else if (in_cell && (tag.name == "math" || tag.name == "formula")) {
      cell.math = true;
    } else if (in_cell && (tag.name == "graphics" || tag.name == "img" || tag.name == "figure")) {
      cell.figure = true;
    }

    if (!in_cell && is_row_tag(tag.name)) {
      if (in_row) flush_row();  // nested row: close the outer one
      in_row = true;
      row_flagged = attr_marks_header(tag.attrs) || thead_depth > 0;
      row_depth = stack.size();
      if (tag.self_closing) {
        flush_row();
        continue;
      }
    } else if (in_row && !in_cell && is_cell_tag(tag.name)) {
      table.has_cell_tags = true;
      in_cell = true;
      cell_depth = stack.size();
      cell.header = tag.name == "th" || attr_marks_header(tag.attrs);
      cell.colspan = span_attr(tag.attrs, "colspan");
      cell.rowspan = span_attr(tag.attrs, "rowspan");
      if (tag.self_closing) {
        flush_cell();
        continue;
      }
    } else if (!in_cell && is_cell_tag(tag.name)) {
      table.has_cell_tags = true;  // cell outside any row: counted, not placed
    } else if (tag.name == "thead" && !tag.self_closing) {
      ++thead_depth;
    }
    if (!tag.self_closing) stack.push_back(tag.name);
  }
  if (!stack.empty()) throw MalformedXml("unclosed <" + stack.back() + ">");
  return table;
}

Grid expand_spans(const XmlTable& table) {
  Grid g;
  g.rows.resize(table.rows.size());
  g.header_row.resize(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    g.header_row[r] = table.rows[r].header;
    std::size_t c = 0;
    for (const auto& cell : table.rows[r].cells) {
      auto& cur = g.rows[r];
      while (c < cur.size() && cur[c].filled) ++c;
      for (int dr = 0; dr < cell.rowspan && r + dr < table.rows.size(); ++dr) {
        auto& target = g.rows[r + dr];
        if (target.size() < c + cell.colspan) target.resize(c + cell.colspan);
        for (int dc = 0; dc < cell.colspan; ++dc) {
          auto& slot = target[c + dc];
          if (slot.filled) continue;
          slot = GridSlot{cell.text, cell.header, true, dr == 0 && dc == 0, cell.math, cell.figure};
        }
      }
      c += cell.colspan;
    }
  }
  for (const auto& row : g.rows) g.width = std::max(g.width, row.size());
  return g;
}

}  // namespace digesttab::curation
