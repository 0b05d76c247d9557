#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "digesttab/core/model.hpp"

namespace digesttab {

using ojson = nlohmann::ordered_json;

/// "{{cite:abc}}" -> "abc"; anything else is returned unchanged.
std::string unwrap_cite_marker(std::string_view s);
std::string wrap_cite_marker(std::string_view cite_id);

/// Canonical corpus JSON -> ReviewTable. All strings are NFC-normalized.
/// Throws ValidationError on structural problems (ragged columns, missing keys).
ReviewTable parse_table(const ojson& j);

/// ReviewTable -> canonical corpus JSON. For canonical input,
/// serialize_table(parse_table(j)) == j.
ojson serialize_table(const ReviewTable& table);

/// Loads tables from a .json file (object or array), a .jsonl file, or a directory
/// of such files (sorted by file name). JSON objects without both `table_id` and
/// `table` keys (reports, manifests) are skipped.
std::vector<ReviewTable> load_corpus(const std::filesystem::path& path);

/// One canonical table per line.
void write_corpus_jsonl(const std::filesystem::path& path, const std::vector<ReviewTable>& tables);

void write_table_json(const std::filesystem::path& path, const ReviewTable& table);

std::string read_file(const std::filesystem::path& path);

/// Writes to a temporary sibling then renames, so readers never observe partial files.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace digesttab
