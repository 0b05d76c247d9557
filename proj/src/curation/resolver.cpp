#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "digesttab/curation/resolver.hpp"

#include <cctype>
#include <regex>

#include "digesttab/core/corpus_json.hpp"
#include "digesttab/core/text.hpp"
#include "digesttab/gateway/http_providers.hpp"

namespace digesttab::curation {

namespace {

PaperRecord record_from_json(const std::string& cite_id, const ojson& j) {
  PaperRecord p;
  p.cite_id = cite_id;
  p.title = text::nfc(j.value("title", ""));
  auto opt = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return text::nfc(j[key].get<std::string>());
  };
  p.abstract = opt("abstract");
  p.external_id = opt("external_id");
  p.full_text = opt("full_text");
  return p;
}

// Percent-encodes everything except unreserved characters plus ':' and '/', which
// the paper endpoint accepts verbatim in "DOI:10.x/y" style ids.
std::string encode_path_segment(const std::string& s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~' || c == ':' || c == '/') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

}  // namespace

JsonFileResolver::JsonFileResolver(const std::filesystem::path& path) {
  ojson j;
  try {
    j = ojson::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("metadata file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ValidationError("metadata file " + path.string() + " must hold a JSON object");
  for (const auto& [id, rec] : j.items()) records_.emplace(id, record_from_json(id, rec));
}

JsonFileResolver::JsonFileResolver(std::map<std::string, PaperRecord> records) : records_(std::move(records)) {}

std::optional<PaperRecord> JsonFileResolver::resolve(const std::string& cite_id, const std::string&) {
  auto it = records_.find(cite_id);
  if (it == records_.end()) return std::nullopt;
  PaperRecord p = it->second;
  p.cite_id = cite_id;
  return p;
}

CorpusResolver::CorpusResolver(const std::vector<ReviewTable>& corpus) {
  for (const auto& t : corpus) {
    for (const auto& p : t.papers) records_.emplace(p.cite_id, p);
  }
}

std::optional<PaperRecord> CorpusResolver::resolve(const std::string& cite_id, const std::string&) {
  auto it = records_.find(cite_id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

FullTextDirectory::FullTextDirectory(std::shared_ptr<MetadataResolver> inner, std::filesystem::path dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {}

std::optional<PaperRecord> FullTextDirectory::resolve(const std::string& cite_id, const std::string& bib_text) {
  auto rec = inner_->resolve(cite_id, bib_text);
  if (!rec || rec->full_text) return rec;
  for (const auto* key : {&rec->cite_id, rec->external_id ? &*rec->external_id : nullptr}) {
    if (!key) continue;
    auto file = dir_ / (*key + ".txt");
    std::error_code ec;
    if (std::filesystem::is_regular_file(file, ec)) {
      rec->full_text = text::nfc(read_file(file));
      break;
    }
  }
  return rec;
}

std::optional<std::string> lookup_id_from_bib(const std::string& bib_text) {
  static const std::regex arxiv_new(R"((?:arxiv(?:\.org/abs/|:)\s*)(\d{4}\.\d{4,5})(?:v\d+)?)", std::regex::icase);
  static const std::regex arxiv_old(R"((?:arxiv(?:\.org/abs/|:)\s*)([a-z\-]+(?:\.[A-Z]{2})?/\d{7}))", std::regex::icase);
  static const std::regex doi(R"((10\.\d{4,9}/[^\s,;]+[^\s,;.]))", std::regex::icase);
  std::smatch m;
  if (std::regex_search(bib_text, m, arxiv_new) || std::regex_search(bib_text, m, arxiv_old)) {
    return "arXiv:" + m[1].str();
  }
  if (std::regex_search(bib_text, m, doi)) return "DOI:" + m[1].str();
  return std::nullopt;
}

SemanticScholarResolver::SemanticScholarResolver(SemanticScholarOptions options) : options_(std::move(options)) {}

std::optional<PaperRecord> SemanticScholarResolver::resolve(const std::string& cite_id, const std::string& bib_text) {
  std::string id = lookup_id_from_bib(bib_text).value_or(cite_id);
  auto [host, prefix] = gateway::split_base_url(options_.base_url);
  httplib::Client client(host);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("x-api-key", options_.api_key);
  std::string path = prefix + "/paper/" + encode_path_segment(id) + "?fields=title,abstract,externalIds";
  auto res = client.Get(path, headers);
  if (!res) throw ResolverUnavailable(httplib::to_string(res.error()) + " contacting " + host);
  if (res->status == 404) return std::nullopt;
  if (res->status == 429 || res->status >= 500 || res->status == 408) {
    throw ResolverUnavailable("HTTP " + std::to_string(res->status) + " from " + host);
  }
  if (res->status == 401 || res->status == 403) {
    throw ResolverUnavailable("metadata service rejected the API key (HTTP " + std::to_string(res->status) + ")");
  }
  if (res->status != 200) return std::nullopt;
  ojson j;
  try {
    j = ojson::parse(res->body);
  } catch (const nlohmann::json::exception&) {
    throw ResolverUnavailable("metadata service returned non-JSON");
  }
  PaperRecord p;
  p.cite_id = cite_id;
  p.title = j.contains("title") && j["title"].is_string() ? text::nfc(j["title"].get<std::string>()) : "";
  if (j.contains("abstract") && j["abstract"].is_string()) p.abstract = text::nfc(j["abstract"].get<std::string>());
  if (j.contains("paperId") && j["paperId"].is_string()) p.external_id = j["paperId"].get<std::string>();
  return p;
}

CachingResolver::CachingResolver(std::shared_ptr<MetadataResolver> inner) : inner_(std::move(inner)) {}

std::optional<PaperRecord> CachingResolver::resolve(const std::string& cite_id, const std::string& bib_text) {
  auto key = std::make_pair(cite_id, bib_text);
  {
    std::lock_guard lock(mu_);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  }
  auto rec = inner_->resolve(cite_id, bib_text);
  std::lock_guard lock(mu_);
  memo_.emplace(key, rec);
  return rec;
}

}  // namespace digesttab::curation
