#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "digesttab/core/error.hpp"
#include "digesttab/core/model.hpp"

namespace digesttab::curation {

/// Network or service failure; distinct from "not found".
class ResolverUnavailable : public Error {
 public:
  explicit ResolverUnavailable(const std::string& m) : Error(ErrorKind::ResolverUnavailable, m) {}
};

/// Looks up title/abstract (and optionally full text) for one citation.
/// Returns nullopt when the paper cannot be found. Implementations must be thread-safe.
class MetadataResolver {
 public:
  virtual ~MetadataResolver() = default;
  virtual std::optional<PaperRecord> resolve(const std::string& cite_id, const std::string& bib_text) = 0;
};

/// Offline metadata: a JSON object {cite_id: {title, abstract?, external_id?, full_text?}}.
class JsonFileResolver : public MetadataResolver {
 public:
  explicit JsonFileResolver(const std::filesystem::path& path);
  explicit JsonFileResolver(std::map<std::string, PaperRecord> records);

  std::optional<PaperRecord> resolve(const std::string& cite_id, const std::string& bib_text) override;

 private:
  std::map<std::string, PaperRecord> records_;
};

/// Serves citation_info records from an existing corpus (used to re-run the pipeline on its output).
class CorpusResolver : public MetadataResolver {
 public:
  explicit CorpusResolver(const std::vector<ReviewTable>& corpus);

  std::optional<PaperRecord> resolve(const std::string& cite_id, const std::string& bib_text) override;

 private:
  std::map<std::string, PaperRecord> records_;
};

/// Attaches full text from `<dir>/<cite_id>.txt` (or `<external_id>.txt`) to whatever the inner resolver returns.
class FullTextDirectory : public MetadataResolver {
 public:
  FullTextDirectory(std::shared_ptr<MetadataResolver> inner, std::filesystem::path dir);

  std::optional<PaperRecord> resolve(const std::string& cite_id, const std::string& bib_text) override;

 private:
  std::shared_ptr<MetadataResolver> inner_;
  std::filesystem::path dir_;
};

struct SemanticScholarOptions {
  std::string base_url = "https://api.semanticscholar.org/graph/v1";
  std::string api_key;
  std::chrono::seconds timeout{30};
};

/// GET {base}/paper/{id}?fields=title,abstract,externalIds. The id is taken from an arXiv
/// identifier or DOI in the bibliography text, else the cite_id itself. 404 means not found;
/// 429, 5xx and transport errors raise ResolverUnavailable.
class SemanticScholarResolver : public MetadataResolver {
 public:
  explicit SemanticScholarResolver(SemanticScholarOptions options);

  std::optional<PaperRecord> resolve(const std::string& cite_id, const std::string& bib_text) override;

 private:
  SemanticScholarOptions options_;
};

/// "arXiv:1810.04805" or "DOI:10.18653/v1/N19-1423" if one appears in the text.
std::optional<std::string> lookup_id_from_bib(const std::string& bib_text);

/// Memoizes results per (cite_id, bib_text); failures are not cached.
class CachingResolver : public MetadataResolver {
 public:
  explicit CachingResolver(std::shared_ptr<MetadataResolver> inner);

  std::optional<PaperRecord> resolve(const std::string& cite_id, const std::string& bib_text) override;

 private:
  std::shared_ptr<MetadataResolver> inner_;
  std::mutex mu_;
  std::map<std::pair<std::string, std::string>, std::optional<PaperRecord>> memo_;
};

}  // namespace digesttab::curation
