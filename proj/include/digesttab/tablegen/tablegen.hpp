#pragma once

#include <array>
#include <cstddef>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "digesttab/core/corpus_json.hpp"
#include "digesttab/core/model.hpp"
#include "digesttab/gateway/gateway.hpp"

namespace digesttab::corpus {
class CaptionIndex;
}

namespace digesttab::tablegen {

enum class ContextKind { Baseline, GeneratedCaption, GoldCaption, GoldCaptionWithRefs, FewShot };

const char* to_string(ContextKind k);
/// Accepts the CLI spellings: baseline, gen-caption, gold-caption, gold-caption-refs, fewshot.
ContextKind context_kind_from_string(const std::string& s);

struct GenerationContext {
  ContextKind kind = ContextKind::Baseline;
  std::optional<std::string> caption;
  std::optional<std::vector<InTextReference>> in_text_refs;
  std::optional<std::vector<ReviewTable>> exemplars;

  /// Throws PreconditionError when the fields required by `kind` are missing.
  /// GeneratedCaption may omit the caption; decomposed generation then writes one.
  void validate() const;
};

inline constexpr std::size_t kFewShotExemplars = 5;

/// Few-shot context from the caption index: the 5 nearest tables other than `exclude_table_id`.
GenerationContext fewshot_context(const std::string& caption, const corpus::CaptionIndex& index,
                                  const std::vector<ReviewTable>& corpus, gateway::Gateway& gateway,
                                  const std::optional<std::string>& exclude_table_id = {});

struct ValueQuery {
  std::string aspect;
  std::optional<std::string> description;
  std::string question;
  std::array<std::string, 4> retry_variants;
};

struct CellAnswer {
  std::string answer;
  std::vector<std::string> excerpts;
  bool empty = true;
};

inline constexpr std::size_t kMaxExcerpts = 10;
inline constexpr std::size_t kMaxExcerptWords = 800;

struct GenerationOptions {
  std::string model_id = "gpt-4-turbo";
  /// Column descriptions and their rewrite into questions.
  std::string query_model_id = "gpt-4-turbo";
  std::string value_model_id = "gpt-4-turbo";
  std::string rewrite_model_id = "gpt-3.5-turbo";
  std::size_t batch_size = 20;
  /// Total attempts per generation step (format errors, count mismatches and context overflow alike).
  int max_attempts = 5;
  /// How many of the 4 retry phrasings value generation may fall back on.
  std::size_t retry_variants = 4;
  int max_tokens = 2048;
  double temperature = 0.0;
  /// Character budget for a paper's full text inside the value prompt.
  std::size_t value_context_chars = 48000;
  std::size_t workers = 4;
};

/// Per-run bookkeeping, copied into the generated table's provenance.
struct GenerationTrace {
  std::size_t calls = 0;
  std::size_t retries = 0;
  std::size_t reminder_retries = 0;
  std::size_t empty_cells = 0;
  std::size_t truncated_texts = 0;
  std::vector<std::string> degraded_columns;
  std::vector<std::string> aspect_collisions;
  std::vector<std::size_t> batches;
  std::set<std::string> digests;
};

class TableGenerator {
 public:
  TableGenerator(gateway::Gateway& gateway, GenerationOptions options = {});

  ReviewTable generate_joint(const std::vector<PaperRecord>& papers, std::size_t n_aspects);
  Schema generate_schema(const std::vector<PaperRecord>& papers, std::size_t n_aspects,
                         const GenerationContext& context);
  std::string generate_caption(const std::vector<PaperRecord>& papers);
  ValueQuery build_value_query(const std::string& aspect, const GenerationContext& context);
  CellAnswer generate_value(const PaperRecord& paper, const ValueQuery& query);
  /// Empties stay empty. On failure the untouched answers are returned and `degraded` is set.
  std::vector<CellValue> rewrite_column(const std::vector<CellAnswer>& values, const std::string& aspect,
                                        bool* degraded = nullptr);
  ReviewTable generate_table_decomposed(const std::vector<PaperRecord>& papers, std::size_t n_aspects,
                                        GenerationContext context);

  const GenerationOptions& options() const { return options_; }
  GenerationTrace trace() const;
  void reset_trace();

 private:
  /// Runs `prompt` up to max_attempts times until `accept` returns true.
  template <typename Accept>
  void run_with_retries(const std::string& what, const std::string& model_id, const std::string& prompt,
                        bool with_system, Accept&& accept);
  gateway::ChatResponse call(const std::string& model_id, const std::string& prompt, bool with_system);
  std::vector<std::vector<std::size_t>> paper_batches(std::size_t n_papers) const;
  std::vector<std::string> schema_for_batch(const std::vector<PaperRecord>& papers, std::size_t first_index,
                                            std::size_t n_aspects, const GenerationContext& context);
  ojson provenance_block(const std::string& mode, const GenerationContext* context) const;

  gateway::Gateway& gateway_;
  GenerationOptions options_;
  mutable std::mutex mu_;
  GenerationTrace trace_;
};

/// Splits `n_aspects` over `n_batches` as evenly as possible, earlier batches first.
std::vector<std::size_t> split_columns(std::size_t n_aspects, std::size_t n_batches);

/// The part of `full_text` that fits `budget` characters: the head of the document
/// plus any section whose header shares a word with `aspect`.
std::string fit_full_text(const std::string& full_text, const std::string& aspect, std::size_t budget);

/// Clips to kMaxExcerpts entries and kMaxExcerptWords words in total.
std::vector<std::string> clip_excerpts(std::vector<std::string> excerpts);

}  // namespace digesttab::tablegen
