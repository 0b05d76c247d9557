#include "digesttab/align/align.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "digesttab/core/csv.hpp"
#include "digesttab/core/error.hpp"
#include "digesttab/core/hash.hpp"
#include "digesttab/core/json_extract.hpp"
#include "digesttab/core/parallel.hpp"
#include "digesttab/core/text.hpp"
#include "digesttab/tablegen/prompts.hpp"

namespace digesttab::align {

const char* to_string(FeaturizerMode m) {
  switch (m) {
    case FeaturizerMode::Name: return "name";
    case FeaturizerMode::Values: return "values";
    case FeaturizerMode::Decontext: return "decontext";
  }
  return "?";
}

const char* to_string(ScorerKind s) {
  switch (s) {
    case ScorerKind::ExactMatch: return "exact";
    case ScorerKind::Jaccard: return "jaccard";
    case ScorerKind::EmbedCosine: return "embed";
    case ScorerKind::LlmAligner: return "llm";
  }
  return "?";
}

FeaturizerMode featurizer_from_string(const std::string& s) {
  auto f = text::casefold(text::trim(s));
  if (f == "name") return FeaturizerMode::Name;
  if (f == "values") return FeaturizerMode::Values;
  if (f == "decontext") return FeaturizerMode::Decontext;
  throw ValidationError("unknown featurizer '" + s + "' (expected name, values or decontext)");
}

ScorerKind scorer_from_string(const std::string& s) {
  auto f = text::casefold(text::trim(s));
  if (f == "exact" || f == "exact-match") return ScorerKind::ExactMatch;
  if (f == "jaccard") return ScorerKind::Jaccard;
  if (f == "embed" || f == "embed-cosine" || f == "sentence-transformers") return ScorerKind::EmbedCosine;
  if (f == "llm" || f == "llm-aligner") return ScorerKind::LlmAligner;
  throw ValidationError("unknown scorer '" + s + "' (expected exact, jaccard, embed or llm)");
}

void AlignmentConfig::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ValidationError("threshold must lie in [0,1], got " + std::to_string(threshold));
  }
}

std::string AlignmentConfig::label() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t=%.2f", threshold);
  return std::string(to_string(featurizer)) + "/" + to_string(scorer) + "/" + buf;
}

namespace {

void apply_threshold(AlignmentResult& r) {
  r.matched_pairs.clear();
  r.matched_ref_aspects.clear();
  r.one_to_one.clear();
  std::vector<std::pair<double, AspectPair>> above;
  for (const auto& [pair, score] : r.pair_scores) {
    if (score > r.config.threshold) {
      r.matched_pairs.insert(pair);
      r.matched_ref_aspects.insert(pair.second);
      above.push_back({score, pair});
    }
  }
  std::stable_sort(above.begin(), above.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::set<std::string> used_gen, used_ref;
  for (const auto& [score, pair] : above) {
    if (used_gen.contains(pair.first) || used_ref.contains(pair.second)) continue;
    used_gen.insert(pair.first);
    used_ref.insert(pair.second);
    r.one_to_one.push_back(pair);
  }
  r.recall = r.ref_aspects.empty() ? 0.0
                                   : static_cast<double>(r.matched_ref_aspects.size()) /
                                         static_cast<double>(r.ref_aspects.size());
}

}  // namespace

AlignmentResult rethreshold(const AlignmentResult& r, double threshold) {
  AlignmentResult out = r;
  out.config.threshold = threshold;
  out.config.validate();
  apply_threshold(out);
  return out;
}

ojson AlignmentResult::to_json() const {
  ojson j;
  j["config"] = {{"featurizer", to_string(config.featurizer)},
                 {"scorer", to_string(config.scorer)},
                 {"threshold", config.threshold}};
  j["gen_aspects"] = gen_aspects;
  j["ref_aspects"] = ref_aspects;
  j["recall"] = recall;
  j["matched_ref_aspects"] = ojson::array();
  for (const auto& a : ref_aspects) {
    if (matched_ref_aspects.contains(a)) j["matched_ref_aspects"].push_back(a);
  }
  auto pairs = [](const auto& ps) {
    ojson arr = ojson::array();
    for (const auto& [g, r] : ps) arr.push_back({g, r});
    return arr;
  };
  j["matched_pairs"] = pairs(matched_pairs);
  j["one_to_one"] = pairs(one_to_one);
  j["pair_scores"] = ojson::array();
  for (const auto& g : gen_aspects) {
    for (const auto& r : ref_aspects) {
      auto it = pair_scores.find({g, r});
      if (it != pair_scores.end()) j["pair_scores"].push_back({{"gen", g}, {"ref", r}, {"score", it->second}});
    }
  }
  ojson gf = ojson::object(), rf = ojson::object();
  for (const auto& g : gen_aspects) {
    if (gen_features.contains(g)) gf[g] = gen_features.at(g);
  }
  for (const auto& r : ref_aspects) {
    if (ref_features.contains(r)) rf[r] = ref_features.at(r);
  }
  j["gen_features"] = gf;
  j["ref_features"] = rf;
  j["warnings"] = warnings;
  return j;
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words{
      "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours", "yourself",
      "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself", "it", "its", "itself",
      "they", "them", "their", "theirs", "themselves", "what", "which", "who", "whom", "this", "that", "these",
      "those", "am", "is", "are", "was", "were", "be", "been", "being", "have", "has", "had", "having", "do",
      "does", "did", "doing", "a", "an", "the", "and", "but", "if", "or", "because", "as", "until", "while",
      "of", "at", "by", "for", "with", "about", "against", "between", "into", "through", "during", "before",
      "after", "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over", "under", "again",
      "further", "then", "once", "here", "there", "when", "where", "why", "how", "all", "any", "both", "each",
      "few", "more", "most", "other", "some", "such", "no", "nor", "not", "only", "own", "same", "so", "than",
      "too", "very", "s", "t", "can", "will", "just", "don", "should", "now", "d", "ll", "m", "o", "re", "ve",
      "y", "ain", "aren", "couldn", "didn", "doesn", "hadn", "hasn", "haven", "isn", "ma", "mightn", "mustn",
      "needn", "shan", "shouldn", "wasn", "weren", "won", "wouldn", "also", "could", "would", "may", "might",
      "must", "shall", "per", "via", "within", "without", "upon", "among", "across", "along", "etc", "e", "g",
      "ie", "eg"};
  return words;
}

std::set<std::string> content_tokens(const std::string& s) {
  std::set<std::string> out;
  for (auto& tok : text::word_tokens(s)) {
    if (!stopwords().contains(tok)) out.insert(std::move(tok));
  }
  return out;
}

double exact_match(const std::string& a, const std::string& b) {
  return text::normalize_for_match(a) == text::normalize_for_match(b) ? 1.0 : 0.0;
}

namespace {

double set_jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& t : a) inter += b.contains(t);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

}  // namespace

double jaccard(const std::string& a, const std::string& b) {
  auto ca = content_tokens(a), cb = content_tokens(b);
  if (ca.empty() && cb.empty()) {
    auto wa = text::word_tokens(a), wb = text::word_tokens(b);
    return set_jaccard({wa.begin(), wa.end()}, {wb.begin(), wb.end()});
  }
  return set_jaccard(ca, cb);
}

double clamped_cosine(const gateway::Vector& a, const gateway::Vector& b) {
  if (a.size() != b.size()) throw ValidationError("embedding dimensions differ");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

namespace {

std::vector<std::string> non_blank_values(const std::string& aspect, const ReviewTable& table) {
  std::vector<std::string> out;
  for (const auto& row : table.row_keys) {
    const auto& c = table.cell(row, aspect);
    if (!c.empty()) out.push_back(text::collapse_whitespace(c.text()));
  }
  return out;
}

void require_aspect(const std::string& aspect, const ReviewTable& table) {
  if (std::find(table.aspects.begin(), table.aspects.end(), aspect) == table.aspects.end()) {
    throw PreconditionError("aspect '" + aspect + "' is not in table '" + table.table_id + "'");
  }
}

}  // namespace

std::string values_feature(const std::string& aspect, const ReviewTable& table) {
  require_aspect(aspect, table);
  auto vals = non_blank_values(aspect, table);
  if (vals.empty()) return aspect;
  return aspect + ": " + text::join(vals, "; ");
}

std::string decontext_prompt(const std::string& aspect, const ReviewTable& table) {
  require_aspect(aspect, table);
  auto vals = non_blank_values(aspect, table);
  std::string list;
  for (const auto& v : vals) list += "- " + v + "\n";
  if (list.empty()) list = "(no values)\n";
  return "A table comparing scientific papers has a column named \"" + aspect +
         "\". Its values, one per paper, are:\n" + list +
         "\nWrite a short stand-alone description of what this column records, so that a reader who has not "
         "seen the table understands it. Expand abbreviations when the values make their meaning clear. "
         "Answer with the description only, as a single paragraph.";
}

namespace {

using Columns = std::vector<std::pair<std::string, std::vector<std::string>>>;

struct Exemplar {
  Columns ref;
  Columns gen;
  std::vector<std::pair<std::string, std::string>> matches;
};

// Alternating with and without matches; half have none.
const std::vector<Exemplar>& exemplars() {
  static const std::vector<Exemplar> ex{
      {{{"Dataset size", {"10K", "1.2M"}}, {"Task", {"QA", "NLI"}}},
       {{"Number of training examples", {"10,000", "1.2 million"}}, {"Evaluation metric", {"F1", "Accuracy"}}},
       {{"Dataset size", "Number of training examples"}}},
      {{{"Backbone", {"ResNet-50", "ViT-B/16"}}, {"Top-1", {"76.1", "81.8"}}},
       {{"Training data", {"ImageNet", "JFT-300M"}}, {"Year", {"2016", "2020"}}},
       {}},
      {{{"Model", {"BERT", "GPT-2"}}, {"Params", {"110M", "1.5B"}}},
       {{"Architecture", {"Transformer encoder", "Transformer decoder"}},
        {"Number of parameters", {"110 million", "1.5 billion"}}},
       {{"Params", "Number of parameters"}}},
      {{{"Reward model", {"yes", "no"}}, {"Policy optimization", {"PPO", "DPO"}}},
       {{"Human evaluation", {"pairwise", "Likert"}}, {"Dataset", {"HH-RLHF", "UltraFeedback"}}},
       {}},
      {{{"Language", {"English", "German"}}, {"Domain", {"News", "Wikipedia"}}},
       {{"Languages covered", {"English", "German"}}, {"Source of text", {"news articles", "Wikipedia pages"}}},
       {{"Language", "Languages covered"}, {"Domain", "Source of text"}}},
      {{{"Sampling rate", {"16 kHz", "44.1 kHz"}}, {"Hours", {"960", "50"}}},
       {{"Speaker count", {"2,484", "110"}}, {"Transcription", {"manual", "automatic"}}},
       {}},
      {{{"Year", {"2019", "2021"}}, {"Venue", {"ACL", "NeurIPS"}}},
       {{"Publication year", {"2019", "2021"}}, {"Main contribution", {"new dataset", "new loss"}}},
       {{"Year", "Publication year"}}},
      {{{"Graph type", {"homogeneous", "heterogeneous"}}, {"Nodes", {"2.7K", "170K"}}},
       {{"Task", {"node classification", "link prediction"}}, {"Aggregator", {"mean", "attention"}}},
       {}},
      {{{"Annotation", {"crowdsourced", "expert"}}, {"Open source", {"✓", "✗"}}},
       {{"Code released", {"yes", "no"}}, {"Labeling method", {"Mechanical Turk workers", "domain experts"}}},
       {{"Annotation", "Labeling method"}, {"Open source", "Code released"}}},
      {{{"Privacy guarantee", {"ε=1", "ε=8"}}, {"Clients", {"100", "3,400"}}},
       {{"Communication rounds", {"500", "1,000"}}, {"Model", {"CNN", "LSTM"}}},
       {}},
  };
  return ex;
}

std::string render_columns(const Columns& cols) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : cols) j[k] = v;
  return j.dump();
}

std::string render_matches(const std::vector<std::pair<std::string, std::string>>& ms) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& [a, b] : ms) j.push_back({a, b});
  return j.dump();
}

const char* kAlignerInstructions =
    "Given two tables, match column headers if their columns have very similar values. Most columns will not "
    "have a match.\n\nRespond with a json list, whose elements are two element lists. The first element is the "
    "key of Object 1 and the matching key of Object 2.\nFor example, if the key 'Dataset size' and 'Number of "
    "training examples' are matched, you should return '[['Dataset size', 'Number of training examples']]. If no "
    "keys contain the same information, then just output an empty list '[]'";

}  // namespace

std::string aligner_prompt(const Columns& ref_columns, const Columns& gen_columns) {
  std::string p = kAlignerInstructions;
  for (const auto& e : exemplars()) {
    p += "\n\nTable 1:\n" + render_columns(e.ref) + "\n\nTable 2:\n" + render_columns(e.gen) +
         "\n\nResponse: " + render_matches(e.matches);
  }
  p += "\n\nTable 1:\n" + render_columns(ref_columns) + "\n\nTable 2:\n" + render_columns(gen_columns) +
       "\n\nResponse:";
  return p;
}

Aligner::Aligner(gateway::Gateway* gateway, AlignerOptions options)
    : gateway_(gateway), options_(std::move(options)) {
  if (options_.max_attempts < 1) throw ValidationError("max_attempts must be at least 1");
}

gateway::Gateway& Aligner::require_gateway(const char* what) const {
  if (!gateway_) throw PreconditionError(std::string(what) + " needs a model gateway");
  return *gateway_;
}

std::string Aligner::featurize(const std::string& aspect, const ReviewTable& table, FeaturizerMode mode) {
  require_aspect(aspect, table);
  switch (mode) {
    case FeaturizerMode::Name: return aspect;
    case FeaturizerMode::Values: return values_feature(aspect, table);
    case FeaturizerMode::Decontext: break;
  }
  auto& gw = require_gateway("the decontext featurizer");
  const std::string prompt = decontext_prompt(aspect, table);
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    gateway::ChatRequest req;
    req.model_id = options_.decontext_model_id;
    req.messages = {{"user", attempt == 1 ? prompt : prompt + tablegen::prompts::format_reminder(attempt)}};
    req.max_tokens = options_.max_tokens;
    auto resp = gw.chat(req);
    auto out = text::collapse_whitespace(resp.text);
    if (!out.empty() && resp.finish_reason != gateway::FinishReason::Length) return out;
  }
  throw GenerationFailed("decontext description of '" + aspect + "': no usable response after " +
                         std::to_string(options_.max_attempts) + " attempts");
}

std::vector<std::string> Aligner::featurize_all(const ReviewTable& table, FeaturizerMode mode) {
  std::vector<std::string> out(table.aspects.size());
  parallel_for(table.aspects.size(), mode == FeaturizerMode::Decontext ? options_.workers : 1,
               [&](std::size_t i) { out[i] = featurize(table.aspects[i], table, mode); });
  return out;
}


double Aligner::score_pair(const std::string& a, const std::string& b, ScorerKind scorer) {
  if (text::is_blank(a) || text::is_blank(b)) throw PreconditionError("score_pair needs non-empty feature texts");
  switch (scorer) {
    case ScorerKind::ExactMatch: return exact_match(a, b);
    case ScorerKind::Jaccard: return jaccard(a, b);
    case ScorerKind::EmbedCosine: {
      auto vs = require_gateway("the embedding scorer").embed({a, b});
      return clamped_cosine(vs.at(0), vs.at(1));
    }
    case ScorerKind::LlmAligner: break;
  }
  throw PreconditionError("the LLM aligner scores whole tables; use llm_align");
}

namespace {

// Feature texts can collide (two columns with the same name); the aligner needs distinct keys.
std::vector<std::string> distinct_headers(const std::vector<std::string>& features) {
  std::vector<std::string> out;
  std::map<std::string, int> seen;
  for (const auto& f : features) {
    int k = ++seen[f];
    out.push_back(k == 1 ? f : f + " (" + std::to_string(k) + ")");
  }
  return out;
}

Columns table_columns(const ReviewTable& t, const std::vector<std::string>& headers) {
  Columns cols;
  for (std::size_t i = 0; i < t.aspects.size(); ++i) {
    std::vector<std::string> vals;
    for (const auto& row : t.row_keys) vals.push_back(t.cell(row, t.aspects[i]).text());
    cols.push_back({headers[i], std::move(vals)});
  }
  return cols;
}

std::optional<std::string> lookup_header(const std::string& key, const std::vector<std::string>& headers,
                                         const std::vector<std::string>& aspects) {
  for (std::size_t i = 0; i < headers.size(); ++i) {
    if (headers[i] == key) return aspects[i];
  }
  auto norm = text::normalize_for_match(key);
  for (std::size_t i = 0; i < headers.size(); ++i) {
    if (text::normalize_for_match(headers[i]) == norm) return aspects[i];
  }
  return std::nullopt;
}

void require_aspects(const ReviewTable& t, const char* which) {
  if (t.aspects.empty()) throw PreconditionError(std::string(which) + " table has no aspects");
  if (std::find(t.aspects.begin(), t.aspects.end(), kReferencesColumn) != t.aspects.end()) {
    throw PreconditionError(std::string(which) + " table lists the reserved References column as an aspect");
  }
}

}  // namespace

std::set<AspectPair> Aligner::llm_align(const ReviewTable& gen, const ReviewTable& ref, FeaturizerMode mode,
                                        std::vector<std::string>* warnings) {
  return llm_pairs(gen, ref, featurize_all(gen, mode), featurize_all(ref, mode), warnings);
}

std::set<AspectPair> Aligner::llm_pairs(const ReviewTable& gen, const ReviewTable& ref,
                                        const std::vector<std::string>& gen_features,
                                        const std::vector<std::string>& ref_features,
                                        std::vector<std::string>* warnings) {
  auto& gw = require_gateway("the LLM aligner");
  auto gen_headers = distinct_headers(gen_features);
  auto ref_headers = distinct_headers(ref_features);
  const std::string prompt = aligner_prompt(table_columns(ref, ref_headers), table_columns(gen, gen_headers));

  std::optional<nlohmann::json> parsed;
  for (int attempt = 1; attempt <= options_.max_attempts && !parsed; ++attempt) {
    gateway::ChatRequest req;
    req.model_id = options_.aligner_model_id;
    req.messages = {{"user", attempt == 1 ? prompt : prompt + tablegen::prompts::format_reminder(attempt)}};
    req.max_tokens = options_.max_tokens;
    auto resp = gw.chat(req);
    if (resp.finish_reason == gateway::FinishReason::Length) continue;
    auto j = extract_json(resp.text, JsonShape::Array);
    if (!j) continue;
    bool ok = std::all_of(j->begin(), j->end(), [](const nlohmann::json& e) {
      return e.is_array() && e.size() == 2 && e[0].is_string() && e[1].is_string();
    });
    if (ok) parsed = std::move(j);
  }
  if (!parsed) {
    throw MalformedJson("aligner response is not a JSON list of header pairs after " +
                        std::to_string(options_.max_attempts) + " attempts");
  }

  std::set<AspectPair> out;
  auto warn = [&](const std::string& m) {
    if (warnings) warnings->push_back(m);
  };
  for (const auto& e : *parsed) {
    auto a = e[0].get<std::string>(), b = e[1].get<std::string>();
    auto r = lookup_header(a, ref_headers, ref.aspects);
    auto g = lookup_header(b, gen_headers, gen.aspects);
    if (r && g) {
      out.insert({*g, *r});
      continue;
    }
    // the model sometimes answers with the tables swapped
    auto g2 = lookup_header(a, gen_headers, gen.aspects);
    auto r2 = lookup_header(b, ref_headers, ref.aspects);
    if (g2 && r2) {
      out.insert({*g2, *r2});
      warn("aligner pair [\"" + a + "\", \"" + b + "\"] was in reversed order");
      continue;
    }
    warn("discarded aligner pair [\"" + a + "\", \"" + b + "\"]: header not found in both tables");
  }
  return out;
}

AlignmentResult Aligner::align(const ReviewTable& gen, const ReviewTable& ref, const AlignmentConfig& config) {
  config.validate();
  require_aspects(gen, "generated");
  require_aspects(ref, "reference");
  AlignmentResult r;
  r.config = config;
  r.gen_aspects = gen.aspects;
  r.ref_aspects = ref.aspects;
  auto gf = featurize_all(gen, config.featurizer);
  auto rf = featurize_all(ref, config.featurizer);
  for (std::size_t i = 0; i < gf.size(); ++i) r.gen_features[gen.aspects[i]] = gf[i];
  for (std::size_t j = 0; j < rf.size(); ++j) r.ref_features[ref.aspects[j]] = rf[j];

  switch (config.scorer) {
    case ScorerKind::LlmAligner: {
      auto pairs = llm_pairs(gen, ref, gf, rf, &r.warnings);
      for (const auto& g : gen.aspects) {
        for (const auto& x : ref.aspects) r.pair_scores[{g, x}] = pairs.contains({g, x}) ? 1.0 : 0.0;
      }
      break;
    }
    case ScorerKind::EmbedCosine: {
      std::vector<std::string> texts(gf);
      texts.insert(texts.end(), rf.begin(), rf.end());
      auto vs = require_gateway("the embedding scorer").embed(texts);
      for (std::size_t i = 0; i < gf.size(); ++i) {
        for (std::size_t j = 0; j < rf.size(); ++j) {
          r.pair_scores[{gen.aspects[i], ref.aspects[j]}] = clamped_cosine(vs.at(i), vs.at(gf.size() + j));
        }
      }
      break;
    }
    default:
      for (std::size_t i = 0; i < gf.size(); ++i) {
        for (std::size_t j = 0; j < rf.size(); ++j) {
          r.pair_scores[{gen.aspects[i], ref.aspects[j]}] = score_pair(gf[i], rf[j], config.scorer);
        }
      }
  }
  apply_threshold(r);
  return r;
}

std::pair<double, std::pair<double, double>> mean_with_ci(const std::vector<double>& recalls,
                                                          const stats::BootstrapOptions& bootstrap) {
  double m = stats::mean(recalls);
  if (recalls.size() == 1) return {m, {m, m}};
  return {m, stats::bootstrap_ci(recalls, stats::mean, bootstrap)};
}

CalibrationReport calibrate(Aligner& aligner, const std::vector<TablePair>& pairs, const CalibrationGrid& grid,
                            const stats::BootstrapOptions& bootstrap) {
  if (pairs.empty()) throw PreconditionError("calibration needs at least one table pair");
  for (double t : grid.thresholds) AlignmentConfig{FeaturizerMode::Name, ScorerKind::ExactMatch, t}.validate();
  CalibrationReport rep;
  rep.bootstrap = bootstrap;
  for (auto f : grid.featurizers) {
    for (auto g : grid.scorers) {
      std::vector<AlignmentResult> base;
      for (const auto& p : pairs) base.push_back(aligner.align(p.gen, p.ref, {f, g, 0.0}));
      for (double t : grid.thresholds) {
        std::vector<double> recalls;
        std::size_t matched = 0, total = 0;
        for (const auto& b : base) {
          auto r = rethreshold(b, t);
          recalls.push_back(r.recall);
          matched += r.matched_ref_aspects.size();
          total += r.ref_aspects.size();
        }
        auto [m, ci] = mean_with_ci(recalls, bootstrap);
        rep.rows.push_back({f, g, t, m, ci.first, ci.second,
                            total ? static_cast<double>(matched) / static_cast<double>(total) : 0.0, pairs.size()});
      }
    }
  }
  return rep;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string threshold_str(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

}  // namespace

std::string CalibrationReport::to_csv() const {
  std::vector<csv::Row> out{{"featurizer", "scorer", "t", "mean_recall", "ci_low", "ci_high"}};
  for (const auto& r : rows) {
    out.push_back({to_string(r.featurizer), to_string(r.scorer), threshold_str(r.threshold), num(r.mean_recall),
                   num(r.ci_low), num(r.ci_high)});
  }
  return csv::format(out);
}

ojson CalibrationReport::to_json() const {
  ojson j;
  j["averaging"] = "macro";
  j["bootstrap"] = {{"iterations", bootstrap.iterations}, {"seed", bootstrap.seed}, {"confidence", bootstrap.confidence}};
  j["rows"] = ojson::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"featurizer", to_string(r.featurizer)},
                         {"scorer", to_string(r.scorer)},
                         {"t", r.threshold},
                         {"mean_recall", r.mean_recall},
                         {"ci_low", r.ci_low},
                         {"ci_high", r.ci_high},
                         {"micro_recall", r.micro_recall},
                         {"n_pairs", r.n_pairs}});
  }
  return j;
}

const char* to_string(MatchRating r) {
  switch (r) {
    case MatchRating::Incorrect: return "incorrect";
    case MatchRating::Partial: return "partial";
    case MatchRating::Complete: return "complete";
  }
  return "?";
}

MatchRating match_rating_from_string(const std::string& s) {
  auto f = text::casefold(text::trim(s));
  if (f == "incorrect") return MatchRating::Incorrect;
  if (f == "partial") return MatchRating::Partial;
  if (f == "complete") return MatchRating::Complete;
  throw ValidationError("unknown rating '" + s + "' (expected incorrect, partial or complete)");
}

namespace {

const csv::Row kPrecisionHeader{"pair_id", "gen_aspect_feature", "ref_aspect_feature", "config_blind_id", "rating"};

}  // namespace

PrecisionExport export_precision_annotations(const std::vector<RatedRun>& runs, std::uint64_t seed) {
  if (runs.empty()) throw PreconditionError("nothing to export: no alignment results");
  PrecisionExport ex;
  ex.key["configs"] = ojson::object();
  ex.key["pairs"] = ojson::object();
  std::vector<csv::Row> rows;
  for (const auto& run : runs) {
    auto label = run.result.config.label();
    auto blind = "cfg-" + sha256_hex(label + ":" + std::to_string(seed)).substr(0, 8);
    ex.key["configs"][blind] = label;
    for (const auto& [g, r] : run.result.matched_pairs) {
      auto id = "m" + sha256_hex(run.pair_id + '\x1f' + g + '\x1f' + r).substr(0, 12);
      ex.key["pairs"][id] = {{"table_pair", run.pair_id}, {"gen", g}, {"ref", r}};
      auto gf = run.result.gen_features.contains(g) ? run.result.gen_features.at(g) : g;
      auto rf = run.result.ref_features.contains(r) ? run.result.ref_features.at(r) : r;
      rows.push_back({id, gf, rf, blind, ""});
    }
  }
  std::mt19937_64 engine(splitmix64(seed));
  for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[engine() % i]);
  rows.insert(rows.begin(), kPrecisionHeader);
  ex.csv = csv::format(rows);
  return ex;
}

std::vector<AnnotatedPair> read_precision_annotations(const std::string& csv_text) {
  auto rows = csv::parse(csv_text);
  if (rows.empty() || rows[0] != kPrecisionHeader) {
    throw ValidationError("annotation CSV must start with header " + csv::format_row(kPrecisionHeader));
  }
  std::vector<AnnotatedPair> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() == 1 && text::is_blank(r[0])) continue;
    if (r.size() != kPrecisionHeader.size()) {
      throw ValidationError("annotation CSV line " + std::to_string(i + 1) + " has " + std::to_string(r.size()) +
                            " fields");
    }
    AnnotatedPair p{r[0], r[3], r[1], r[2], std::nullopt};
    if (!text::is_blank(r[4])) p.rating = match_rating_from_string(r[4]);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PrecisionBounds> precision_bounds(const std::vector<AnnotatedPair>& rows, const ojson& key) {
  std::map<std::string, PrecisionBounds> by;
  auto name_of = [&](const std::string& blind) {
    if (key.is_object() && key.contains("configs") && key["configs"].contains(blind)) {
      return key["configs"][blind].get<std::string>();
    }
    return blind;
  };
  if (key.is_object() && key.contains("configs")) {
    for (auto it = key["configs"].begin(); it != key["configs"].end(); ++it) {
      by[it.key()].config = it.value().get<std::string>();
    }
  }
  for (const auto& r : rows) {
    auto& b = by[r.config_blind_id];
    b.config = name_of(r.config_blind_id);
    if (!r.rating) {
      ++b.unrated;
      continue;
    }
    ++b.rated;
    switch (*r.rating) {
      case MatchRating::Complete: ++b.complete; break;
      case MatchRating::Partial: ++b.partial; break;
      case MatchRating::Incorrect: ++b.incorrect; break;
    }
  }
  std::vector<PrecisionBounds> out;
  for (auto& [blind, b] : by) {
    if (b.rated) {
      b.lower = static_cast<double>(b.complete) / static_cast<double>(b.rated);
      b.upper = static_cast<double>(b.complete + b.partial) / static_cast<double>(b.rated);
    }
    out.push_back(b);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.config < b.config; });
  return out;
}

}  // namespace digesttab::align
