#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "digesttab/core/corpus_json.hpp"
#include "digesttab/core/error.hpp"
#include "digesttab/core/model.hpp"
#include "digesttab/gateway/gateway.hpp"

namespace digesttab::corpus {

class EmptyCorpus : public Error {
 public:
  explicit EmptyCorpus(const std::string& m) : Error(ErrorKind::EmptyCorpus, m) {}
};

enum class AspectType { Category, Entity, Numeric, Text, Boolean };

const char* to_string(AspectType t);
const std::vector<AspectType>& all_aspect_types();

/// Thresholds for the aspect-type heuristic. Rules apply in order:
/// Boolean, Numeric, Category, Text, then Entity as the fallback.
struct ClassifierConfig {
  std::size_t category_max_distinct = 8;
  double category_max_mean_tokens = 3.0;
  /// A column where every value is distinct names things (Entity) rather than picking
  /// from a closed set, so Category also needs at least one repeated value.
  bool category_requires_repeat = true;
  double text_min_mean_tokens = 6.0;
};

struct Classification {
  AspectType type = AspectType::Entity;
  std::string rule;  // "boolean-lexicon", "numeric-pattern", "category-closed-set", "text-long", "entity-fallback"
};

/// Empty cells are ignored. Throws PreconditionError if every value is empty.
Classification classify_aspect_detailed(const std::vector<CellValue>& values, const ClassifierConfig& config = {});
AspectType classify_aspect(const std::vector<CellValue>& values, const ClassifierConfig& config = {});

bool is_boolean_token(const std::string& value);
bool is_numeric_value(const std::string& value);

struct Summary {
  std::size_t min = 0;
  std::size_t max = 0;
  double median = 0;
  double mean = 0;
  std::size_t total = 0;
};

Summary summarize_counts(const std::vector<std::size_t>& counts);

struct CorpusStats {
  std::size_t n_tables = 0;
  std::size_t n_unique_papers = 0;
  Summary rows;
  Summary aspects;
  std::map<AspectType, double> aspect_type_distribution;
  std::map<AspectType, std::size_t> aspect_type_counts;
  std::map<std::string, std::size_t> rule_attribution;
  std::size_t all_empty_columns = 0;  // not classified, excluded from the distribution
  std::vector<std::string> notes;

  ojson to_json() const;
  std::string to_text() const;
};

/// Unique papers are counted by external_id when present, else by cite_id.
/// Throws EmptyCorpus for an empty corpus.
CorpusStats compute_stats(const std::vector<ReviewTable>& corpus, const ClassifierConfig& config = {});

/// Caption embeddings, L2-normalized so cosine similarity is a dot product.
class CaptionIndex {
 public:
  CaptionIndex() = default;

  /// Embeds every non-blank caption through the gateway. Tables without a caption are not indexed.
  static CaptionIndex build(const std::vector<ReviewTable>& corpus, gateway::Gateway& gateway);

  /// Top-k (table_id, cosine) pairs, similarity descending then table_id ascending.
  /// `exclude_table_id` removes the query table itself. Throws EmbedderUnavailable.
  std::vector<std::pair<std::string, double>> nearest(const std::string& caption, std::size_t k,
                                                      gateway::Gateway& gateway,
                                                      const std::optional<std::string>& exclude_table_id = {}) const;

  void save(const std::filesystem::path& path) const;
  /// Returns nullopt if the file is missing or was built with a different embedding model.
  static std::optional<CaptionIndex> load(const std::filesystem::path& path, const std::string& model_id);

  const std::string& model_id() const { return model_id_; }
  std::size_t size() const { return vectors_.size(); }
  std::size_t dim() const { return dim_; }

 private:
  std::string model_id_;
  std::size_t dim_ = 0;
  std::map<std::string, std::vector<double>> vectors_;
};

std::vector<double> l2_normalize(const gateway::Vector& v);

/// Embeds through the gateway, mapping provider failures to EmbedderUnavailable.
std::vector<gateway::Vector> embed_or_throw(gateway::Gateway& gateway, const std::vector<std::string>& texts);

}  // namespace digesttab::corpus
