#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "digesttab/core/corpus_json.hpp"
#include "digesttab/core/model.hpp"
#include "digesttab/gateway/gateway.hpp"
#include "digesttab/stats/stats.hpp"

namespace digesttab::align {

enum class FeaturizerMode { Name, Values, Decontext };
enum class ScorerKind { ExactMatch, Jaccard, EmbedCosine, LlmAligner };

/// CLI spellings: name, values, decontext / exact, jaccard, embed, llm.
const char* to_string(FeaturizerMode m);
const char* to_string(ScorerKind s);
FeaturizerMode featurizer_from_string(const std::string& s);
ScorerKind scorer_from_string(const std::string& s);

struct AlignmentConfig {
  FeaturizerMode featurizer = FeaturizerMode::Decontext;
  ScorerKind scorer = ScorerKind::EmbedCosine;
  double threshold = 0.7;

  void validate() const;
  std::string label() const;  // "decontext/embed/t=0.70"
};

using AspectPair = std::pair<std::string, std::string>;  // (generated aspect, reference aspect)

struct AlignmentResult {
  AlignmentConfig config;
  std::vector<std::string> gen_aspects;
  std::vector<std::string> ref_aspects;
  std::map<AspectPair, double> pair_scores;
  /// Every pair scoring strictly above the threshold (many-to-one allowed).
  std::set<AspectPair> matched_pairs;
  std::set<std::string> matched_ref_aspects;
  /// Greedy one-to-one assignment by descending score, for inspection.
  std::vector<AspectPair> one_to_one;
  double recall = 0;
  std::map<std::string, std::string> gen_features;
  std::map<std::string, std::string> ref_features;
  std::vector<std::string> warnings;

  ojson to_json() const;
};

/// Recomputes matches and recall of `r` at a new threshold without rescoring.
AlignmentResult rethreshold(const AlignmentResult& r, double threshold);

inline constexpr const char* kStopwordListVersion = "en-stopwords-v1";
inline constexpr const char* kDecontextPromptVersion = "decontext-v1";
inline constexpr const char* kAlignerExemplarVersion = "aligner-exemplars-v1";

const std::set<std::string>& stopwords();

/// Stopword-filtered word tokens.
std::set<std::string> content_tokens(const std::string& text);

double exact_match(const std::string& a, const std::string& b);
/// Jaccard over content tokens. When both sides consist only of stopwords the
/// unfiltered token sets are compared instead; two empty sets score 0.
double jaccard(const std::string& a, const std::string& b);
/// Cosine clamped below at 0.
double clamped_cosine(const gateway::Vector& a, const gateway::Vector& b);

/// "Task: VQA; classification". Blank cells are skipped.
std::string values_feature(const std::string& aspect, const ReviewTable& table);

std::string decontext_prompt(const std::string& aspect, const ReviewTable& table);
/// The aligner prompt: fixed instructions, ten worked examples, then the two tables.
/// Table 1 is the reference, Table 2 the generated table, keyed by feature text.
std::string aligner_prompt(const std::vector<std::pair<std::string, std::vector<std::string>>>& ref_columns,
                           const std::vector<std::pair<std::string, std::vector<std::string>>>& gen_columns);

struct AlignerOptions {
  std::string decontext_model_id = "mistralai/Mixtral-8x7B-Instruct-v0.1";
  std::string aligner_model_id = "meta-llama/Meta-Llama-3-70B-Instruct";
  int max_attempts = 5;
  int max_tokens = 1024;
  std::size_t workers = 4;
};

class Aligner {
 public:
  /// `gateway` may be null when only Name/Values features and lexical scorers are used.
  explicit Aligner(gateway::Gateway* gateway, AlignerOptions options = {});

  std::string featurize(const std::string& aspect, const ReviewTable& table, FeaturizerMode mode);
  std::vector<std::string> featurize_all(const ReviewTable& table, FeaturizerMode mode);

  /// Symmetric scorers only; LlmAligner scores whole tables through llm_align.
  double score_pair(const std::string& a, const std::string& b, ScorerKind scorer);

  /// Pairs (generated aspect, reference aspect) returned by the chat model. Pairs naming
  /// unknown headers are dropped and reported in `warnings`.
  std::set<AspectPair> llm_align(const ReviewTable& gen, const ReviewTable& ref, FeaturizerMode mode,
                                 std::vector<std::string>* warnings = nullptr);

  AlignmentResult align(const ReviewTable& gen, const ReviewTable& ref, const AlignmentConfig& config);

 private:
  gateway::Gateway& require_gateway(const char* what) const;
  std::set<AspectPair> llm_pairs(const ReviewTable& gen, const ReviewTable& ref,
                                 const std::vector<std::string>& gen_features,
                                 const std::vector<std::string>& ref_features, std::vector<std::string>* warnings);

  gateway::Gateway* gateway_;
  AlignerOptions options_;
};

struct TablePair {
  std::string id;
  ReviewTable gen;
  ReviewTable ref;
};

struct CalibrationGrid {
  std::vector<FeaturizerMode> featurizers{FeaturizerMode::Name, FeaturizerMode::Values, FeaturizerMode::Decontext};
  std::vector<ScorerKind> scorers{ScorerKind::ExactMatch, ScorerKind::Jaccard, ScorerKind::EmbedCosine};
  std::vector<double> thresholds{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
};

struct CalibrationRow {
  FeaturizerMode featurizer;
  ScorerKind scorer;
  double threshold;
  double mean_recall;  // macro: mean of per-table recall
  double ci_low;
  double ci_high;
  double micro_recall;  // matched reference aspects over all reference aspects
  std::size_t n_pairs;
};

struct CalibrationReport {
  std::vector<CalibrationRow> rows;
  stats::BootstrapOptions bootstrap;

  /// featurizer,scorer,t,mean_recall,ci_low,ci_high
  std::string to_csv() const;
  ojson to_json() const;
};

/// Macro mean with a percentile bootstrap CI over table pairs; a single pair gets a point interval.
std::pair<double, std::pair<double, double>> mean_with_ci(const std::vector<double>& recalls,
                                                          const stats::BootstrapOptions& bootstrap);

CalibrationReport calibrate(Aligner& aligner, const std::vector<TablePair>& pairs, const CalibrationGrid& grid,
                            const stats::BootstrapOptions& bootstrap = {});

/// One alignment run to be rated, tagged with the table pair it came from.
struct RatedRun {
  std::string pair_id;
  AlignmentResult result;
};

enum class MatchRating { Incorrect, Partial, Complete };
const char* to_string(MatchRating r);
MatchRating match_rating_from_string(const std::string& s);

struct PrecisionExport {
  std::string csv;       // pair_id,gen_aspect_feature,ref_aspect_feature,config_blind_id,rating
  ojson key;             // blind id -> config label, pair_id -> (table pair, gen, ref)
};

/// Rows are shuffled with `seed` so neither order nor labels reveal the configuration.
PrecisionExport export_precision_annotations(const std::vector<RatedRun>& runs, std::uint64_t seed = 0);

struct PrecisionBounds {
  std::string config;
  std::size_t rated = 0;
  std::size_t complete = 0;
  std::size_t partial = 0;
  std::size_t incorrect = 0;
  std::size_t unrated = 0;
  /// nullopt (reported as n/a) when nothing was rated.
  std::optional<double> lower;
  std::optional<double> upper;
};

struct AnnotatedPair {
  std::string pair_id;
  std::string config_blind_id;
  std::string gen_feature;
  std::string ref_feature;
  std::optional<MatchRating> rating;
};

std::vector<AnnotatedPair> read_precision_annotations(const std::string& csv_text);

/// Per configuration (resolved through `key` when it names the blind id).
std::vector<PrecisionBounds> precision_bounds(const std::vector<AnnotatedPair>& rows, const ojson& key = {});

}  // namespace digesttab::align
