#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "digesttab/align/align.hpp"
#include "digesttab/core/corpus_json.hpp"
#include "digesttab/core/error.hpp"
#include "digesttab/core/model.hpp"
#include "digesttab/stats/stats.hpp"
#include "digesttab/tablegen/tablegen.hpp"

namespace digesttab::value_eval {

class SchemaMismatch : public Error {
 public:
  explicit SchemaMismatch(const std::string& m) : Error(ErrorKind::SchemaMismatch, m) {}
};

enum class Setting { ColumnNames, CaptionContext, AllContext };

/// CLI spellings: col-names, caption, all-context.
const char* to_string(Setting s);
Setting setting_from_string(const std::string& s);
tablegen::ContextKind context_kind(Setting s);

/// Fills the reference schema with generated values. Cells whose generation fails are left
/// empty and counted in provenance; rows are never dropped.
ReviewTable generate_values_for_reference(tablegen::TableGenerator& generator, const ReviewTable& ref, Setting setting);

enum class HumanLabel { Complete, Partial, None };
const char* to_string(HumanLabel l);
HumanLabel human_label_from_string(const std::string& s);

struct ValuePairJudgment {
  std::string table_id;
  std::string row;
  std::string aspect;
  CellValue gold;
  CellValue generated;
  std::map<std::string, double> auto_scores;  // scorer name -> [0,1]
  std::optional<HumanLabel> human_label;
};

struct ValueScores {
  std::vector<ValuePairJudgment> judgments;
  /// Cells with an empty reference value; excluded from every denominator.
  std::size_t gold_empty = 0;
  std::vector<align::ScorerKind> scorers;

  std::map<std::string, double> mean_scores() const;
  ojson summary_json() const;
  /// One JSON object per line, in row-major order.
  std::string judgments_jsonl() const;
};

/// `aligner` supplies the embedding gateway when EmbedCosine is requested.
ValueScores score_values(const ReviewTable& ref, const ReviewTable& gen, const std::vector<align::ScorerKind>& scorers,
                         align::Aligner& aligner);

struct SettingJudgments {
  Setting setting;
  std::vector<ValuePairJudgment> judgments;
};

struct ValueAnnotationExport {
  std::string csv;  // cell_id,gold,generated,setting_blind_id,label
  ojson key;        // blind id -> setting, cell id -> (table, row, aspect)
};

ValueAnnotationExport export_value_annotations(const std::vector<SettingJudgments>& runs, std::uint64_t seed = 0);

struct LabeledCell {
  std::string cell_id;
  std::string gold;
  std::string generated;
  std::string setting_blind_id;
  std::optional<HumanLabel> label;
};

/// Rejects any label outside {complete, partial, none}; a blank label means unlabeled.
std::vector<LabeledCell> read_value_annotations(const std::string& csv_text);

struct SettingProportions {
  std::string setting;
  std::size_t complete = 0;
  std::size_t partial = 0;
  std::size_t none = 0;
  std::size_t total() const { return complete + partial + none; }
};

struct ValueAnnotationReport {
  std::vector<SettingProportions> settings;
  /// Between the first two annotators over cells both labeled.
  std::optional<stats::AgreementResult> kappa;
  std::size_t kappa_items = 0;

  ojson to_json() const;
  std::string to_markdown() const;
};

/// `annotators[0]` supplies the proportions; κ compares it with `annotators[1]` when present.
ValueAnnotationReport import_value_annotations(const std::vector<std::vector<LabeledCell>>& annotators,
                                               const ojson& key = {});

}  // namespace digesttab::value_eval
