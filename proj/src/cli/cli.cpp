#include "digesttab/cli/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>

#include <CLI11.hpp>

#include "digesttab/align/align.hpp"
#include "digesttab/core/error.hpp"
#include "digesttab/core/hash.hpp"
#include "digesttab/corpus/corpus_store.hpp"
#include "digesttab/curation/curation.hpp"
#include "digesttab/curation/resolver.hpp"
#include "digesttab/gateway/gateway.hpp"
#include "digesttab/gateway/http_providers.hpp"
#include "digesttab/gateway/stub_providers.hpp"
#include "digesttab/stats/stats.hpp"
#include "digesttab/tablegen/tablegen.hpp"
#include "digesttab/value_eval/value_eval.hpp"

namespace fs = std::filesystem;

namespace digesttab::cli {

namespace {

constexpr const char* kVersion = "0.1.0";

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& m) : Error(ErrorKind::Usage, m) {}
};

std::string sha256_of_path(const fs::path& p) {
  if (fs::is_directory(p)) {
    std::vector<std::pair<std::string, std::string>> files;
    for (const auto& e : fs::recursive_directory_iterator(p)) {
      if (e.is_regular_file()) files.emplace_back(fs::relative(e.path(), p).generic_string(), sha256_hex(read_file(e.path())));
    }
    std::sort(files.begin(), files.end());
    std::string acc;
    for (const auto& [rel, h] : files) acc += rel + '\0' + h + '\n';
    return sha256_hex(acc);
  }
  return sha256_hex(read_file(p));
}

/// Artifacts plus the manifest describing how they were made.
class Run {
 public:
  Run(std::string subcommand, std::vector<std::string> args, RunConfig config, std::optional<fs::path> out_dir)
      : subcommand_(std::move(subcommand)), args_(std::move(args)), config_(std::move(config)), out_(std::move(out_dir)) {}

  const RunConfig& config() const { return config_; }

  fs::path input(const std::string& path) {
    fs::path p(path);
    if (!fs::exists(p)) throw IoError("input not found: " + path);
    inputs_[path] = sha256_of_path(p);
    return p;
  }

  void artifact(const std::string& name, const std::string& contents) {
    if (!out_) return;
    write_file_atomic(*out_ / name, contents);
    outputs_[name] = sha256_hex(contents);
  }

  gateway::Gateway& gateway(const Injected& injected) {
    if (gw_) return *gw_;
    gateway::GatewayOptions o;
    o.cache_dir = config_.cache_dir;
    o.chat_provider_name = config_.chat.name;
    o.embed_provider_name = config_.embed.name;
    o.embed_model_id = config_.embed_model;
    o.max_in_flight = config_.max_in_flight;
    o.rate_per_second = config_.rate_per_second;
    std::shared_ptr<gateway::ChatProvider> chat = injected.chat;
    std::shared_ptr<gateway::EmbedProvider> embed = injected.embed;
    auto endpoint = [](const ProviderConfig& p) {
      return gateway::HttpEndpoint{p.base_url, p.api_key, std::chrono::seconds(p.timeout_s)};
    };
    if (!chat && config_.chat.kind == "openai") {
      chat = std::make_shared<gateway::OpenAiChatProvider>(endpoint(config_.chat), config_.chat.name);
    }
    if (!embed && config_.embed.kind == "openai") {
      embed = std::make_shared<gateway::OpenAiEmbedProvider>(endpoint(config_.embed), config_.embed.name);
    } else if (!embed && config_.embed.kind == "hash") {
      embed = std::make_shared<gateway::HashEmbedder>(config_.embed.dim, config_.embed.seed, config_.embed.name);
    }
    gw_ = std::make_unique<gateway::Gateway>(o, chat, embed);
    return *gw_;
  }

  void finish() {
    if (!out_) return;
    ojson m;
    m["tool"] = "digesttab";
    m["version"] = kVersion;
    m["subcommand"] = subcommand_;
    m["args"] = args_;
    m["config"] = config_.to_json(false);
    m["config_hash"] = config_.hash();
    m["inputs"] = ojson::object();
    for (const auto& [k, v] : inputs_) m["inputs"][k] = v;
    m["outputs"] = ojson::object();
    for (const auto& [k, v] : outputs_) m["outputs"][k] = v;
    std::vector<std::string> digests;
    if (gw_) digests = gw_->digests_used();
    std::sort(digests.begin(), digests.end());
    m["cache_digests"] = digests;
    if (gw_) {
      auto s = gw_->stats();
      m["gateway"] = {{"chat_network_calls", s.chat_network_calls},
                      {"chat_cache_hits", s.chat_cache_hits},
                      {"embed_network_calls", s.embed_network_calls},
                      {"embed_cache_hits", s.embed_cache_hits}};
    }
    write_file_atomic(*out_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string subcommand_;
  std::vector<std::string> args_;
  RunConfig config_;
  std::optional<fs::path> out_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
  std::unique_ptr<gateway::Gateway> gw_;
};

std::string jsonl(const std::vector<ReviewTable>& tables) {
  std::string s;
  for (const auto& t : tables) s += serialize_table(t).dump() + "\n";
  return s;
}

std::string pretty(const ojson& j) { return j.dump(2) + "\n"; }

std::vector<ojson> read_jsonl(const fs::path& p) {
  std::vector<ojson> out;
  std::istringstream in(read_file(p));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(ojson::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(p.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::map<std::string, const ReviewTable*> by_id(const std::vector<ReviewTable>& tables) {
  std::map<std::string, const ReviewTable*> m;
  for (const auto& t : tables) {
    if (!m.emplace(t.table_id, &t).second) throw ValidationError("duplicate table_id " + t.table_id);
  }
  return m;
}

tablegen::GenerationOptions generation_options(const RunConfig& c) {
  tablegen::GenerationOptions o;
  o.model_id = c.schema_model;
  o.query_model_id = c.query_model;
  o.value_model_id = c.value_model;
  o.rewrite_model_id = c.rewrite_model;
  o.batch_size = c.batch_size;
  o.max_attempts = std::max(1, c.retry_budget);
  o.retry_variants = c.retry_variants;
  o.workers = c.workers;
  return o;
}

align::AlignerOptions aligner_options(const RunConfig& c) {
  align::AlignerOptions o;
  o.decontext_model_id = c.decontext_model;
  o.aligner_model_id = c.aligner_model;
  o.max_attempts = std::max(1, c.retry_budget);
  o.workers = c.workers;
  return o;
}

stats::BootstrapOptions bootstrap_options(const RunConfig& c) {
  return {c.bootstrap_iterations, c.seed, c.confidence, c.workers};
}

std::vector<align::TablePair> pair_tables(const std::vector<ReviewTable>& gen, const std::vector<ReviewTable>& ref,
                                          std::vector<std::string>& missing) {
  auto g = by_id(gen);
  std::vector<align::TablePair> pairs;
  for (const auto& r : ref) {
    auto it = g.find(r.table_id);
    if (it == g.end()) {
      missing.push_back(r.table_id);
      continue;
    }
    pairs.push_back({r.table_id, *it->second, r});
  }
  return pairs;
}

std::vector<value_eval::ValuePairJudgment> judgments_from_jsonl(const fs::path& p) {
  std::vector<value_eval::ValuePairJudgment> out;
  for (const auto& o : read_jsonl(p)) {
    value_eval::ValuePairJudgment j;
    j.table_id = o.at("table_id").get<std::string>();
    j.row = o.at("row").get<std::string>();
    j.aspect = o.at("aspect").get<std::string>();
    j.gold = CellValue::of(o.at("gold").get<std::string>());
    if (!o.at("generated").is_null()) j.generated = CellValue::of(o.at("generated").get<std::string>());
    for (const auto& [k, v] : o.at("auto_scores").items()) j.auto_scores[k] = v.get<double>();
    out.push_back(std::move(j));
  }
  return out;
}

ojson bounds_json(const std::vector<align::PrecisionBounds>& bounds) {
  ojson arr = ojson::array();
  for (const auto& b : bounds) {
    arr.push_back({{"config", b.config},
                   {"rated", b.rated},
                   {"complete", b.complete},
                   {"partial", b.partial},
                   {"incorrect", b.incorrect},
                   {"unrated", b.unrated},
                   {"lower", b.lower ? ojson(*b.lower) : ojson(nullptr)},
                   {"upper", b.upper ? ojson(*b.upper) : ojson(nullptr)}});
  }
  return {{"configs", arr}};
}

std::string bounds_markdown(const std::vector<align::PrecisionBounds>& bounds) {
  std::string md = "| Config | Rated | Precision (lower) | Precision (upper) |\n|---|---|---|---|\n";
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * *v);
    return std::string(buf);
  };
  for (const auto& b : bounds) {
    md += "| " + b.config + " | " + std::to_string(b.rated) + " | " + pct(b.lower) + " | " + pct(b.upper) + " |\n";
  }
  return md;
}

/// Options shared by every subcommand.
struct Common {
  std::string config_path;
  std::string out;
  std::string cache_dir;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> batch_size;
  std::optional<int> retry_budget;
};

struct Args {
  // curate
  std::string input, metadata, fulltext_dir, strictness = "high";
  // stats / generate / eval-values
  std::string corpus, format = "json";
  std::string mode = "decomposed", context = "baseline";
  std::size_t n_aspects = 0, limit = 0;
  std::optional<std::size_t> retry_variants;
  // align / calibrate
  std::string gen, ref;
  std::optional<std::string> featurizer, scorer;
  std::optional<double> threshold;
  std::vector<std::string> featurizers, scorers;
  std::vector<double> thresholds;
  std::optional<std::size_t> iterations;
  // eval-values
  std::string setting = "col-names", generated;
  // report
  std::string ratings, alignments;
  // annotations
  std::string kind;
  std::vector<std::string> sources;
  std::string key;
};

RunConfig resolve_config(const Common& common, const Args& a, const EnvLookup& env) {
  RunConfig c = common.config_path.empty() ? default_config(env) : load_config(common.config_path, env);
  if (!common.cache_dir.empty()) c.cache_dir = common.cache_dir;
  if (common.workers) c.workers = *common.workers;
  if (common.seed) c.seed = *common.seed;
  if (common.batch_size) c.batch_size = *common.batch_size;
  if (common.retry_budget) c.retry_budget = *common.retry_budget;
  if (a.retry_variants) c.retry_variants = *a.retry_variants;
  if (a.featurizer) c.alignment.featurizer = align::featurizer_from_string(*a.featurizer);
  if (a.scorer) c.alignment.scorer = align::scorer_from_string(*a.scorer);
  if (a.threshold) c.alignment.threshold = *a.threshold;
  if (a.iterations) c.bootstrap_iterations = *a.iterations;
  c.validate();
  return c;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
}

std::optional<fs::path> out_dir(const Common& common, bool required) {
  if (common.out.empty()) {
    if (required) throw UsageError("missing required option --out");
    return std::nullopt;
  }
  fs::create_directories(common.out);
  return fs::path(common.out);
}

int cmd_curate(Run& run, const Args& a, const Injected&) {
  require(a.input, "--input");
  const auto& c = run.config();
  std::shared_ptr<curation::MetadataResolver> resolver;
  if (!a.metadata.empty()) {
    resolver = std::make_shared<curation::JsonFileResolver>(run.input(a.metadata));
  } else if (c.resolver_kind == "semantic-scholar") {
    curation::SemanticScholarOptions o;
    o.base_url = c.resolver_base_url;
    o.api_key = c.resolver_api_key;
    resolver = std::make_shared<curation::CachingResolver>(std::make_shared<curation::SemanticScholarResolver>(o));
  } else {
    throw UsageError("curate needs --metadata FILE or resolver.kind = semantic-scholar in the config");
  }
  if (!a.fulltext_dir.empty()) {
    resolver = std::make_shared<curation::FullTextDirectory>(resolver, run.input(a.fulltext_dir));
  }
  curation::PipelineOptions po;
  po.workers = c.workers;
  auto result = curation::run_pipeline(run.input(a.input), curation::strictness_from_string(a.strictness), *resolver, po);
  run.artifact("corpus.jsonl", jsonl(result.corpus));
  run.artifact("funnel.json", pretty(result.funnel.to_json()));
  return 0;
}

int cmd_stats(Run& run, const Args& a, std::ostream& out) {
  require(a.corpus, "--corpus");
  auto s = corpus::compute_stats(load_corpus(run.input(a.corpus)));
  auto j = pretty(s.to_json());
  if (a.format == "text") out << s.to_text();
  else if (a.format == "json") out << j;
  else throw UsageError("--format must be json or text");
  run.artifact("stats.json", j);
  run.artifact("stats.txt", s.to_text());
  return 0;
}

tablegen::GenerationContext context_for(tablegen::ContextKind kind, const ReviewTable& ref) {
  tablegen::GenerationContext ctx;
  ctx.kind = kind;
  if (kind == tablegen::ContextKind::GoldCaption || kind == tablegen::ContextKind::GoldCaptionWithRefs) {
    ctx.caption = ref.caption;
  }
  if (kind == tablegen::ContextKind::GoldCaptionWithRefs) ctx.in_text_refs = ref.in_text_refs;
  return ctx;
}

int cmd_generate(Run& run, const Args& a, const Injected& injected, std::ostream& err) {
  require(a.corpus, "--corpus");
  if (a.mode != "decomposed" && a.mode != "joint") throw UsageError("--mode must be decomposed or joint");
  auto kind = tablegen::context_kind_from_string(a.context);
  if (a.mode == "joint" && kind != tablegen::ContextKind::Baseline) {
    throw UsageError("joint generation takes no context; use --mode decomposed");
  }
  auto corpus = load_corpus(run.input(a.corpus));
  auto& gw = run.gateway(injected);
  std::optional<corpus::CaptionIndex> index;
  if (kind == tablegen::ContextKind::FewShot) index = corpus::CaptionIndex::build(corpus, gw);

  std::size_t n = a.limit ? std::min(a.limit, corpus.size()) : corpus.size();
  std::vector<ReviewTable> generated;
  ojson failures = ojson::array();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ref = corpus[i];
    tablegen::TableGenerator gen(gw, generation_options(run.config()));
    std::size_t n_aspects = a.n_aspects ? a.n_aspects : ref.aspects.size();
    try {
      ReviewTable t;
      if (a.mode == "joint") {
        t = gen.generate_joint(ref.papers, n_aspects);
      } else {
        auto ctx = kind == tablegen::ContextKind::FewShot
                       ? tablegen::fewshot_context(ref.caption.value_or(""), *index, corpus, gw, ref.table_id)
                       : context_for(kind, ref);
        t = gen.generate_table_decomposed(ref.papers, n_aspects, ctx);
      }
      t.table_id = ref.table_id;
      generated.push_back(std::move(t));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::GenerationFailed && e.kind() != ErrorKind::MalformedJson) throw;
      err << "generation failed for " << ref.table_id << ": " << e.what() << "\n";
      failures.push_back({{"table_id", ref.table_id}, {"error", to_string(e.kind())}, {"message", e.what()}});
    }
  }
  run.artifact("generated.jsonl", jsonl(generated));
  run.artifact("failures.json", pretty(failures));
  return failures.empty() ? 0 : exit_code_for(ErrorKind::GenerationFailed);
}

int cmd_align(Run& run, const Args& a, const Injected& injected, std::ostream& out) {
  require(a.gen, "--gen");
  require(a.ref, "--ref");
  const auto& cfg = run.config().alignment;
  auto gen = load_corpus(run.input(a.gen));
  auto ref = load_corpus(run.input(a.ref));
  std::vector<std::string> missing;
  auto pairs = pair_tables(gen, ref, missing);
  if (pairs.empty()) throw ValidationError("no generated table shares a table_id with the reference corpus");

  align::Aligner aligner(&run.gateway(injected), aligner_options(run.config()));
  std::string lines;
  std::vector<double> recalls;
  std::size_t matched = 0, total = 0;
  for (const auto& p : pairs) {
    auto r = aligner.align(p.gen, p.ref, cfg);
    ojson line{{"table_id", p.id}};
    line.update(r.to_json());
    lines += line.dump() + "\n";
    recalls.push_back(r.recall);
    matched += r.matched_ref_aspects.size();
    total += r.ref_aspects.size();
  }
  ojson summary{{"config", cfg.label()},
                {"featurizer", align::to_string(cfg.featurizer)},
                {"scorer", align::to_string(cfg.scorer)},
                {"threshold", cfg.threshold},
                {"n_pairs", pairs.size()},
                {"mean_recall", stats::mean(recalls)},
                {"micro_recall", total ? double(matched) / double(total) : 0.0},
                {"missing_generated", missing}};
  run.artifact("alignments.jsonl", lines);
  run.artifact("summary.json", pretty(summary));
  out << pretty(summary);
  return 0;
}

int cmd_calibrate(Run& run, const Args& a, const Injected& injected, std::ostream& out) {
  require(a.gen, "--gen");
  require(a.ref, "--ref");
  align::CalibrationGrid grid;
  if (!a.featurizers.empty()) {
    grid.featurizers.clear();
    for (const auto& f : a.featurizers) grid.featurizers.push_back(align::featurizer_from_string(f));
  }
  if (!a.scorers.empty()) {
    grid.scorers.clear();
    for (const auto& s : a.scorers) grid.scorers.push_back(align::scorer_from_string(s));
  }
  if (!a.thresholds.empty()) grid.thresholds = a.thresholds;
  for (double t : grid.thresholds) align::AlignmentConfig{align::FeaturizerMode::Name, align::ScorerKind::ExactMatch, t}.validate();

  auto gen = load_corpus(run.input(a.gen));
  auto ref = load_corpus(run.input(a.ref));
  std::vector<std::string> missing;
  auto pairs = pair_tables(gen, ref, missing);
  if (pairs.empty()) throw ValidationError("no generated table shares a table_id with the reference corpus");
  align::Aligner aligner(&run.gateway(injected), aligner_options(run.config()));
  auto report = align::calibrate(aligner, pairs, grid, bootstrap_options(run.config()));
  auto csv = report.to_csv();
  auto j = report.to_json();
  j["missing_generated"] = missing;
  run.artifact("calibration.csv", csv);
  run.artifact("calibration.json", pretty(j));
  out << csv;
  return 0;
}

int cmd_eval_values(Run& run, const Args& a, const Injected& injected, std::ostream& out) {
  require(a.ref, "--ref");
  auto setting = value_eval::setting_from_string(a.setting);
  std::vector<align::ScorerKind> scorers;
  for (const auto& s : a.scorers.empty() ? std::vector<std::string>{"exact", "jaccard"} : a.scorers) {
    scorers.push_back(align::scorer_from_string(s));
  }
  auto refs = load_corpus(run.input(a.ref));
  if (a.limit && a.limit < refs.size()) refs.resize(a.limit);

  std::optional<std::vector<ReviewTable>> given;
  if (!a.generated.empty()) given = load_corpus(run.input(a.generated));
  auto given_by_id = given ? by_id(*given) : std::map<std::string, const ReviewTable*>{};

  auto& gw = run.gateway(injected);
  align::Aligner aligner(&gw, aligner_options(run.config()));
  std::vector<ReviewTable> values;
  value_eval::ValueScores pooled;
  pooled.scorers = scorers;
  ojson tables = ojson::array();
  std::string judgments;
  for (const auto& ref : refs) {
    ReviewTable gen_t;
    if (given) {
      auto it = given_by_id.find(ref.table_id);
      if (it == given_by_id.end()) throw ValidationError("no generated values for reference table " + ref.table_id);
      gen_t = *it->second;
    } else {
      tablegen::TableGenerator gen(gw, generation_options(run.config()));
      gen_t = value_eval::generate_values_for_reference(gen, ref, setting);
    }
    auto scores = value_eval::score_values(ref, gen_t, scorers, aligner);
    tables.push_back({{"table_id", ref.table_id}, {"summary", scores.summary_json()}});
    judgments += scores.judgments_jsonl();
    pooled.judgments.insert(pooled.judgments.end(), scores.judgments.begin(), scores.judgments.end());
    pooled.gold_empty += scores.gold_empty;
    values.push_back(std::move(gen_t));
  }
  ojson summary{{"setting", value_eval::to_string(setting)},
                {"n_tables", refs.size()},
                {"overall", pooled.summary_json()},
                {"tables", tables}};
  if (!given) run.artifact("values.jsonl", jsonl(values));
  run.artifact("judgments.jsonl", judgments);
  run.artifact("summary.json", pretty(summary));
  out << pretty(summary["overall"]);
  return 0;
}

stats::AlignmentVerdicts verdicts_from(const fs::path& p) {
  stats::AlignmentVerdicts v;
  for (const auto& line : read_jsonl(p)) {
    auto table_id = line.at("table_id").get<std::string>();
    auto r = alignment_from_json(line);
    for (const auto& g : r.gen_aspects) {
      bool hit = std::any_of(r.matched_pairs.begin(), r.matched_pairs.end(), [&](const auto& pr) { return pr.first == g; });
      v[{table_id, g}] = hit;
    }
  }
  return v;
}

int cmd_report(Run& run, const Args& a, std::ostream& out) {
  require(a.ratings, "--ratings");
  require(a.alignments, "--alignments");
  auto ratings = stats::read_ratings_csv(read_file(run.input(a.ratings)));
  auto report = stats::matched_vs_unmatched_report(std::move(ratings), verdicts_from(run.input(a.alignments)));
  auto md = report.to_markdown();
  run.artifact("report.json", pretty(report.to_json()));
  run.artifact("report.md", md);
  out << md;
  return 0;
}

int cmd_export(Run& run, const Args& a) {
  if (a.sources.empty()) throw UsageError("export-annotations needs at least one --from");
  if (a.kind == "precision") {
    std::vector<align::RatedRun> runs;
    for (const auto& src : a.sources) {
      for (const auto& line : read_jsonl(run.input(src))) {
        runs.push_back({line.at("table_id").get<std::string>(), alignment_from_json(line)});
      }
    }
    auto ex = align::export_precision_annotations(runs, run.config().seed);
    run.artifact("precision_annotations.csv", ex.csv);
    run.artifact("precision_key.json", pretty(ex.key));
    return 0;
  }
  if (a.kind == "values") {
    std::vector<value_eval::SettingJudgments> runs;
    for (const auto& src : a.sources) {
      fs::path dir = run.input(src);
      auto summary = ojson::parse(read_file(dir / "summary.json"));
      runs.push_back({value_eval::setting_from_string(summary.at("setting").get<std::string>()),
                      judgments_from_jsonl(dir / "judgments.jsonl")});
    }
    auto ex = value_eval::export_value_annotations(runs, run.config().seed);
    run.artifact("value_annotations.csv", ex.csv);
    run.artifact("value_key.json", pretty(ex.key));
    return 0;
  }
  throw UsageError("--kind must be precision or values");
}

int cmd_import(Run& run, const Args& a, std::ostream& out) {
  if (a.sources.empty()) throw UsageError("import-annotations needs at least one --from");
  ojson key = ojson::object();
  if (!a.key.empty()) key = ojson::parse(read_file(run.input(a.key)));
  if (a.kind == "precision") {
    std::vector<align::AnnotatedPair> rows;
    for (const auto& src : a.sources) {
      auto part = align::read_precision_annotations(read_file(run.input(src)));
      rows.insert(rows.end(), part.begin(), part.end());
    }
    auto bounds = align::precision_bounds(rows, key);
    auto md = bounds_markdown(bounds);
    run.artifact("precision.json", pretty(bounds_json(bounds)));
    run.artifact("precision.md", md);
    out << md;
    return 0;
  }
  if (a.kind == "values") {
    std::vector<std::vector<value_eval::LabeledCell>> annotators;
    for (const auto& src : a.sources) annotators.push_back(value_eval::read_value_annotations(read_file(run.input(src))));
    auto report = value_eval::import_value_annotations(annotators, key);
    auto md = report.to_markdown();
    run.artifact("value_report.json", pretty(report.to_json()));
    run.artifact("value_report.md", md);
    out << md;
    return 0;
  }
  throw UsageError("--kind must be precision or values");
}

}  // namespace

align::AlignmentResult alignment_from_json(const ojson& j) {
  align::AlignmentResult r;
  try {
    const auto& c = j.at("config");
    r.config.featurizer = align::featurizer_from_string(c.at("featurizer").get<std::string>());
    r.config.scorer = align::scorer_from_string(c.at("scorer").get<std::string>());
    r.config.threshold = c.at("threshold").get<double>();
    r.gen_aspects = j.at("gen_aspects").get<std::vector<std::string>>();
    r.ref_aspects = j.at("ref_aspects").get<std::vector<std::string>>();
    r.recall = j.at("recall").get<double>();
    for (const auto& a : j.at("matched_ref_aspects")) r.matched_ref_aspects.insert(a.get<std::string>());
    for (const auto& p : j.at("matched_pairs")) r.matched_pairs.insert({p.at(0).get<std::string>(), p.at(1).get<std::string>()});
    for (const auto& p : j.value("one_to_one", ojson::array())) {
      r.one_to_one.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
    }
    for (const auto& s : j.value("pair_scores", ojson::array())) {
      r.pair_scores[{s.at("gen").get<std::string>(), s.at("ref").get<std::string>()}] = s.at("score").get<double>();
    }
    const auto gf = j.value("gen_features", ojson::object());
    const auto rf = j.value("ref_features", ojson::object());
    for (const auto& [k, v] : gf.items()) r.gen_features[k] = v.get<std::string>();
    for (const auto& [k, v] : rf.items()) r.ref_features[k] = v.get<std::string>();
    r.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed alignment record: ") + e.what());
  }
  return r;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Injected& injected,
        const EnvLookup& env) {
  CLI::App app{"digesttab: literature review table curation, generation and evaluation", "digesttab"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", kVersion);

  Common common;
  Args a;
  auto add_common = [&](CLI::App* sub, bool with_out = true) {
    sub->add_option("--config", common.config_path, "JSON run configuration");
    if (with_out) sub->add_option("--out", common.out, "Output directory for artifacts and manifest");
    sub->add_option("--cache-dir", common.cache_dir, "Response cache directory");
    sub->add_option("--workers", common.workers, "Parallel workers");
    sub->add_option("--seed", common.seed, "Random seed");
    sub->add_option("--batch-size", common.batch_size, "Papers per schema batch");
    sub->add_option("--retry-budget", common.retry_budget, "Attempts per generation step");
  };

  auto* curate = app.add_subcommand("curate", "Filter raw XML tables into a corpus");
  add_common(curate);
  curate->add_option("--input", a.input, "Directory of table XML files");
  curate->add_option("--metadata", a.metadata, "Offline metadata JSON {cite_id: record}");
  curate->add_option("--fulltext-dir", a.fulltext_dir, "Directory of <cite_id>.txt full texts");
  curate->add_option("--strictness", a.strictness, "high or medium");

  auto* st = app.add_subcommand("stats", "Corpus statistics");
  add_common(st);
  st->add_option("--corpus", a.corpus, "Corpus file or directory");
  st->add_option("--format", a.format, "json or text");

  auto* generate = app.add_subcommand("generate", "Generate tables for the papers of each corpus table");
  add_common(generate);
  generate->add_option("--corpus", a.corpus, "Reference corpus supplying papers and context");
  generate->add_option("--mode", a.mode, "decomposed or joint");
  generate->add_option("--context", a.context, "baseline, gen-caption, gold-caption, gold-caption-refs, fewshot");
  generate->add_option("--n-aspects", a.n_aspects, "Columns to generate (0 = as many as the reference)");
  generate->add_option("--limit", a.limit, "Only the first N tables");
  generate->add_option("--retry-variants", a.retry_variants, "Retry phrasings for empty values (0-4)");

  auto* al = app.add_subcommand("align", "Align generated schemas with reference schemas");
  add_common(al);
  al->add_option("--gen", a.gen, "Generated tables");
  al->add_option("--ref", a.ref, "Reference tables");
  al->add_option("--featurizer", a.featurizer, "name, values or decontext");
  al->add_option("--scorer", a.scorer, "exact, jaccard, embed or llm");
  al->add_option("--threshold,-t", a.threshold, "Match threshold in [0,1]");

  auto* cal = app.add_subcommand("calibrate", "Recall over a featurizer x scorer x threshold grid");
  add_common(cal);
  cal->add_option("--gen", a.gen, "Generated tables");
  cal->add_option("--ref", a.ref, "Reference tables");
  cal->add_option("--featurizers", a.featurizers, "Comma-separated featurizers")->delimiter(',');
  cal->add_option("--scorers", a.scorers, "Comma-separated scorers")->delimiter(',');
  cal->add_option("--thresholds", a.thresholds, "Comma-separated thresholds")->delimiter(',');
  cal->add_option("--iterations", a.iterations, "Bootstrap iterations");

  auto* ev = app.add_subcommand("eval-values", "Generate and score values for reference schemas");
  add_common(ev);
  ev->add_option("--ref", a.ref, "Reference tables (papers need full text)");
  ev->add_option("--setting", a.setting, "col-names, caption or all-context");
  ev->add_option("--scorers", a.scorers, "Comma-separated value scorers")->delimiter(',');
  ev->add_option("--generated", a.generated, "Score these tables instead of generating");
  ev->add_option("--limit", a.limit, "Only the first N tables");
  ev->add_option("--retry-variants", a.retry_variants, "Retry phrasings for empty values (0-4)");

  auto* rep = app.add_subcommand("report", "Likert ratings of matched vs unmatched aspects");
  add_common(rep);
  rep->add_option("--ratings", a.ratings, "Ratings CSV");
  rep->add_option("--alignments", a.alignments, "alignments.jsonl from the align subcommand");

  auto* ex = app.add_subcommand("export-annotations", "Blinded CSV for human annotation");
  add_common(ex);
  ex->add_option("--kind", a.kind, "precision or values")->required();
  ex->add_option("--from", a.sources, "alignments.jsonl files (precision) or eval-values output dirs (values)");

  auto* im = app.add_subcommand("import-annotations", "Summarize annotated CSVs");
  add_common(im);
  im->add_option("--kind", a.kind, "precision or values")->required();
  im->add_option("--from", a.sources, "Annotated CSV files, one per annotator");
  im->add_option("--key", a.key, "Key JSON written by export-annotations");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return exit_code_for(ErrorKind::Usage);
  }

  auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    auto config = resolve_config(common, a, env);
    bool needs_out = name != "stats";
    Run run(name, args, config, out_dir(common, needs_out));
    int code = 0;
    if (name == "curate") code = cmd_curate(run, a, injected);
    else if (name == "stats") code = cmd_stats(run, a, out);
    else if (name == "generate") code = cmd_generate(run, a, injected, err);
    else if (name == "align") code = cmd_align(run, a, injected, out);
    else if (name == "calibrate") code = cmd_calibrate(run, a, injected, out);
    else if (name == "eval-values") code = cmd_eval_values(run, a, injected, out);
    else if (name == "report") code = cmd_report(run, a, out);
    else if (name == "export-annotations") code = cmd_export(run, a);
    else if (name == "import-annotations") code = cmd_import(run, a, out);
    run.finish();
    return code;
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    if (e.kind() == ErrorKind::Usage) err << sub->help();
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "error (validation): " << e.what() << "\n";
    return exit_code_for(ErrorKind::Validation);
  } catch (const fs::filesystem_error& e) {
    err << "error (io): " << e.what() << "\n";
    return exit_code_for(ErrorKind::Io);
  }
}

}  // namespace digesttab::cli
