#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "digesttab/core/corpus_json.hpp"
#include "digesttab/core/error.hpp"

namespace digesttab::stats {

class TooFewSamples : public Error {
 public:
  explicit TooFewSamples(const std::string& m) : Error(ErrorKind::TooFewSamples, m) {}
};

class MissingAlignment : public Error {
 public:
  explicit MissingAlignment(const std::string& m) : Error(ErrorKind::MissingAlignment, m) {}
};

using Statistic = std::function<double(const std::vector<double>&)>;

double mean(const std::vector<double>& xs);
/// Sample standard deviation (n-1); 0 for a single value.
double sample_sd(const std::vector<double>& xs);
/// Linear-interpolation percentile on sorted data (q in [0,1]), as numpy's default.
double percentile_sorted(const std::vector<double>& sorted, double q);

struct BootstrapOptions {
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  double confidence = 0.95;
  std::size_t workers = 1;
};

/// Percentile bootstrap. Iteration i draws indices from mt19937_64 seeded with
/// splitmix64(splitmix64(seed) + i), taking `engine() % n`, so every resample is
/// reproducible on its own and iterations can run in any order.
std::pair<double, double> bootstrap_ci(const std::vector<double>& samples, const Statistic& statistic,
                                       const BootstrapOptions& options = {});

/// The resampled indices of one bootstrap iteration (exposed for oracle checks).
std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed, std::size_t iteration);

struct AgreementResult {
  double value = 0;
  /// Set when the statistic is undefined (no expected disagreement) and reported as 1.0.
  bool degenerate = false;
};

AgreementResult cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b);

enum class AlphaLevel { Nominal, Ordinal, Interval };

/// ratings[rater][item]; nullopt marks a missing rating.
AgreementResult krippendorff_alpha(const std::vector<std::vector<std::optional<double>>>& ratings,
                                   AlphaLevel level = AlphaLevel::Ordinal);

struct MannWhitney {
  double u = 0;  // U for the first sample: pairs (x, y) with x > y, ties counting 1/2
  double p = 1;  // two-sided
  bool exact = false;
};

inline constexpr std::size_t kExactMannWhitneyMaxN = 20;

/// Exact null distribution over all rank assignments when |x|+|y| <= 20,
/// otherwise the tie-corrected normal approximation with continuity correction.
MannWhitney mann_whitney_u(const std::vector<double>& x, const std::vector<double>& y);

struct Summary {
  double mean = 0;
  double sd = 0;
  std::size_t n = 0;
  std::pair<double, double> ci95;
};

/// Mean, sample SD and a normal 95% interval for the mean. Throws TooFewSamples on empty input.
Summary summarize(const std::vector<double>& xs);

enum class LikertDimension { Useful, Specific, Insightful };
const char* to_string(LikertDimension d);
LikertDimension likert_dimension_from_string(const std::string& s);

struct LikertRating {
  std::string condition;  // generation setting the rated table came from
  std::string table_id;
  std::string aspect;
  LikertDimension dimension = LikertDimension::Useful;
  std::string rater_id;
  int value = 0;
  bool matched_gold = false;
};

/// CSV with header `table_id,aspect,dimension,rater_id,value` and an optional `condition` column.
std::vector<LikertRating> read_ratings_csv(const std::string& csv_text);

using AlignmentVerdicts = std::map<std::pair<std::string, std::string>, bool>;  // (table_id, aspect) -> matched

struct GroupCell {
  std::optional<Summary> matched;
  std::optional<Summary> unmatched;
  std::optional<MannWhitney> test;
};

struct MatchedReport {
  std::vector<std::string> conditions;
  std::map<std::pair<std::string, LikertDimension>, GroupCell> cells;
  std::map<std::string, std::pair<std::size_t, std::size_t>> samples;  // condition -> (M, NM) aspect count

  ojson to_json() const;
  std::string to_markdown() const;
};

/// Fills matched_gold from `alignments` and summarizes M vs NM per condition and dimension.
/// Throws MissingAlignment if a rated aspect has no verdict.
MatchedReport matched_vs_unmatched_report(std::vector<LikertRating> ratings, const AlignmentVerdicts& alignments);

/// "21.13% (75)" style row for the value-evaluation table.
std::string format_share(std::size_t count, std::size_t total);

}  // namespace digesttab::stats
