#include "digesttab/value_eval/value_eval.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "digesttab/core/csv.hpp"
#include "digesttab/core/hash.hpp"
#include "digesttab/core/parallel.hpp"
#include "digesttab/core/text.hpp"

namespace digesttab::value_eval {

const char* to_string(Setting s) {
  switch (s) {
    case Setting::ColumnNames: return "col-names";
    case Setting::CaptionContext: return "caption";
    case Setting::AllContext: return "all-context";
  }
  return "?";
}

Setting setting_from_string(const std::string& s) {
  auto f = text::casefold(text::trim(s));
  if (f == "col-names" || f == "column-names") return Setting::ColumnNames;
  if (f == "caption" || f == "caption-context") return Setting::CaptionContext;
  if (f == "all-context" || f == "all") return Setting::AllContext;
  throw ValidationError("unknown setting '" + s + "' (expected col-names, caption or all-context)");
}

tablegen::ContextKind context_kind(Setting s) {
  switch (s) {
    case Setting::ColumnNames: return tablegen::ContextKind::Baseline;
    case Setting::CaptionContext: return tablegen::ContextKind::GoldCaption;
    case Setting::AllContext: return tablegen::ContextKind::GoldCaptionWithRefs;
  }
  return tablegen::ContextKind::Baseline;
}

ReviewTable generate_values_for_reference(tablegen::TableGenerator& generator, const ReviewTable& ref, Setting setting) {
  if (ref.aspects.empty() || ref.row_keys.empty()) throw PreconditionError("reference table has no cells");
  std::vector<PaperRecord> papers;
  for (const auto& row : ref.row_keys) {
    const auto* p = ref.paper(row);
    if (!p || !p->full_text || text::is_blank(*p->full_text)) {
      throw PreconditionError("row '" + row + "' of table '" + ref.table_id + "' has no full text");
    }
    papers.push_back(*p);
  }
  tablegen::GenerationContext ctx;
  ctx.kind = context_kind(setting);
  if (setting != Setting::ColumnNames) {
    if (!ref.caption || text::is_blank(*ref.caption)) {
      throw PreconditionError(std::string(to_string(setting)) + " needs the reference caption");
    }
    ctx.caption = ref.caption;
  }
  if (setting == Setting::AllContext) {
    if (ref.in_text_refs.empty()) throw PreconditionError("all-context needs the reference in-text references");
    ctx.in_text_refs = ref.in_text_refs;
  }
  ctx.validate();
  generator.reset_trace();
  const auto workers = generator.options().workers;
  const auto& aspects = ref.aspects;

  std::vector<std::optional<tablegen::ValueQuery>> queries(aspects.size());
  std::vector<std::string> failures(aspects.size() * papers.size());
  parallel_for(aspects.size(), workers, [&](std::size_t a) {
    try {
      queries[a] = generator.build_value_query(aspects[a], ctx);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::GenerationFailed && e.kind() != ErrorKind::MalformedJson) throw;
      for (std::size_t r = 0; r < papers.size(); ++r) failures[a * papers.size() + r] = e.what();
    }
  });

  std::vector<tablegen::CellAnswer> answers(aspects.size() * papers.size());
  parallel_for(answers.size(), workers, [&](std::size_t c) {
    const auto a = c / papers.size();
    if (!queries[a]) return;
    try {
      answers[c] = generator.generate_value(papers[c % papers.size()], *queries[a]);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::GenerationFailed && e.kind() != ErrorKind::MalformedJson) throw;
      failures[c] = e.what();
    }
  });

  std::vector<std::vector<CellValue>> columns(aspects.size());
  std::vector<char> degraded(aspects.size(), 0);
  parallel_for(aspects.size(), workers, [&](std::size_t a) {
    std::vector<tablegen::CellAnswer> col(answers.begin() + static_cast<std::ptrdiff_t>(a * papers.size()),
                                          answers.begin() + static_cast<std::ptrdiff_t>((a + 1) * papers.size()));
    bool d = false;
    columns[a] = generator.rewrite_column(col, aspects[a], &d);
    degraded[a] = d;
  });

  ReviewTable out;
  out.table_id = ref.table_id;
  out.source_paper_id = ref.source_paper_id;
  out.caption = ref.caption;
  out.in_text_refs = ref.in_text_refs;
  out.row_keys = ref.row_keys;
  out.aspects = aspects;
  for (auto p : ref.papers) {
    p.full_text.reset();
    out.papers.push_back(std::move(p));
  }
  std::size_t empty = 0;
  ojson failed = ojson::array();
  for (std::size_t a = 0; a < aspects.size(); ++a) {
    for (std::size_t r = 0; r < papers.size(); ++r) {
      out.set_cell(ref.row_keys[r], aspects[a], columns[a][r]);
      empty += columns[a][r].empty();
      const auto& why = failures[a * papers.size() + r];
      if (!why.empty()) failed.push_back({{"row", ref.row_keys[r]}, {"aspect", aspects[a]}, {"error", why}});
    }
  }
  auto tr = generator.trace();
  const auto& o = generator.options();
  ojson prov;
  prov["mode"] = "reference-schema";
  prov["setting"] = to_string(setting);
  prov["context"] = tablegen::to_string(ctx.kind);
  prov["query_model_id"] = o.query_model_id;
  prov["value_model_id"] = o.value_model_id;
  prov["rewrite_model_id"] = o.rewrite_model_id;
  prov["retry_variants"] = o.retry_variants;
  prov["calls"] = tr.calls;
  prov["retries_used"] = tr.retries;
  prov["empty_cells"] = empty;
  prov["failed_cells"] = failed;
  std::vector<std::string> deg;
  for (std::size_t a = 0; a < aspects.size(); ++a) {
    if (degraded[a]) deg.push_back(aspects[a]);
  }
  prov["degraded_columns"] = deg;
  nlohmann::ordered_json qs = nlohmann::ordered_json::object();
  for (const auto& q : queries) {
    if (q) qs[q->aspect] = q->question;
  }
  prov["questions"] = qs;
  prov["cache_digests"] = std::vector<std::string>(tr.digests.begin(), tr.digests.end());
  out.provenance["value_eval"] = prov;
  return out;
}

const char* to_string(HumanLabel l) {
  switch (l) {
    case HumanLabel::Complete: return "complete";
    case HumanLabel::Partial: return "partial";
    case HumanLabel::None: return "none";
  }
  return "?";
}

HumanLabel human_label_from_string(const std::string& s) {
  auto f = text::casefold(text::trim(s));
  if (f == "complete") return HumanLabel::Complete;
  if (f == "partial") return HumanLabel::Partial;
  if (f == "none") return HumanLabel::None;
  throw ValidationError("label '" + s + "' is not one of complete, partial, none");
}

ValueScores score_values(const ReviewTable& ref, const ReviewTable& gen, const std::vector<align::ScorerKind>& scorers,
                         align::Aligner& aligner) {
  if (ref.aspects != gen.aspects) throw SchemaMismatch("generated table has a different schema from the reference");
  if (ref.row_keys != gen.row_keys) throw SchemaMismatch("generated table has different rows from the reference");
  if (scorers.empty()) throw ValidationError("no scorers requested");
  for (auto s : scorers) {
    if (s == align::ScorerKind::LlmAligner) throw ValidationError("the LLM aligner is not a value scorer");
  }
  ValueScores out;
  out.scorers = scorers;
  for (const auto& row : ref.row_keys) {
    for (const auto& aspect : ref.aspects) {
      const auto& gold = ref.cell(row, aspect);
      if (gold.empty()) {
        ++out.gold_empty;
        continue;
      }
      out.judgments.push_back({ref.table_id, row, aspect, gold, gen.cell(row, aspect), {}, std::nullopt});
    }
  }
  for (auto s : scorers) {
    const std::string name = align::to_string(s);
    for (auto& j : out.judgments) {
      j.auto_scores[name] = j.generated.empty() ? 0.0 : aligner.score_pair(j.gold.text(), j.generated.text(), s);
    }
  }
  return out;
}

std::map<std::string, double> ValueScores::mean_scores() const {
  std::map<std::string, double> m;
  for (auto s : scorers) {
    const std::string name = align::to_string(s);
    double sum = 0;
    for (const auto& j : judgments) sum += j.auto_scores.at(name);
    m[name] = judgments.empty() ? 0.0 : sum / static_cast<double>(judgments.size());
  }
  return m;
}

ojson ValueScores::summary_json() const {
  ojson j;
  j["n_scored"] = judgments.size();
  j["gold_empty_excluded"] = gold_empty;
  std::size_t gen_empty = 0;
  for (const auto& x : judgments) gen_empty += x.generated.empty();
  j["generated_empty"] = gen_empty;
  ojson means = ojson::object();
  for (const auto& [k, v] : mean_scores()) means[k] = v;
  j["mean_scores"] = means;
  return j;
}

std::string ValueScores::judgments_jsonl() const {
  std::string out;
  for (const auto& j : judgments) {
    ojson o;
    o["table_id"] = j.table_id;
    o["row"] = j.row;
    o["aspect"] = j.aspect;
    o["gold"] = j.gold.text();
    o["generated"] = j.generated.empty() ? ojson(nullptr) : ojson(j.generated.text());
    ojson sc = ojson::object();
    for (const auto& [k, v] : j.auto_scores) sc[k] = v;
    o["auto_scores"] = sc;
    out += o.dump() + "\n";
  }
  return out;
}

namespace {

const csv::Row kValueHeader{"cell_id", "gold", "generated", "setting_blind_id", "label"};

}  // namespace

ValueAnnotationExport export_value_annotations(const std::vector<SettingJudgments>& runs, std::uint64_t seed) {
  if (runs.empty()) throw PreconditionError("nothing to export: no value judgments");
  ValueAnnotationExport ex;
  ex.key["settings"] = ojson::object();
  ex.key["cells"] = ojson::object();
  std::vector<csv::Row> rows;
  for (const auto& run : runs) {
    const std::string setting = to_string(run.setting);
    auto blind = "set-" + sha256_hex(setting + ":" + std::to_string(seed)).substr(0, 8);
    ex.key["settings"][blind] = setting;
    for (const auto& j : run.judgments) {
      auto id = "c" + sha256_hex(j.table_id + '\x1f' + j.row + '\x1f' + j.aspect).substr(0, 12);
      ex.key["cells"][id] = {{"table_id", j.table_id}, {"row", j.row}, {"aspect", j.aspect}};
      rows.push_back({id, j.gold.text(), j.generated.text(), blind,
                      j.human_label ? std::string(to_string(*j.human_label)) : std::string()});
    }
  }
  std::mt19937_64 engine(splitmix64(seed));
  for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[engine() % i]);
  rows.insert(rows.begin(), kValueHeader);
  ex.csv = csv::format(rows);
  return ex;
}

std::vector<LabeledCell> read_value_annotations(const std::string& csv_text) {
  auto rows = csv::parse(csv_text);
  if (rows.empty() || rows[0] != kValueHeader) {
    throw ValidationError("annotation CSV must start with header " + csv::format_row(kValueHeader));
  }
  std::vector<LabeledCell> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() == 1 && text::is_blank(r[0])) continue;
    if (r.size() != kValueHeader.size()) {
      throw ValidationError("annotation CSV line " + std::to_string(i + 1) + " has " + std::to_string(r.size()) +
                            " fields");
    }
    LabeledCell c{r[0], r[1], r[2], r[3], std::nullopt};
    if (!text::is_blank(r[4])) {
      try {
        c.label = human_label_from_string(r[4]);
      } catch (const ValidationError& e) {
        throw ValidationError("annotation CSV line " + std::to_string(i + 1) + ": " + e.what());
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

ValueAnnotationReport import_value_annotations(const std::vector<std::vector<LabeledCell>>& annotators,
                                               const ojson& key) {
  if (annotators.empty()) throw PreconditionError("no annotation files");
  auto setting_name = [&](const std::string& blind) {
    if (key.is_object() && key.contains("settings") && key["settings"].contains(blind)) {
      return key["settings"][blind].get<std::string>();
    }
    return blind;
  };
  ValueAnnotationReport rep;
  std::map<std::string, SettingProportions> by;
  for (const auto& c : annotators[0]) {
    if (!c.label) continue;
    auto& s = by[setting_name(c.setting_blind_id)];
    s.setting = setting_name(c.setting_blind_id);
    switch (*c.label) {
      case HumanLabel::Complete: ++s.complete; break;
      case HumanLabel::Partial: ++s.partial; break;
      case HumanLabel::None: ++s.none; break;
    }
  }
  for (auto& [name, s] : by) rep.settings.push_back(s);

  if (annotators.size() >= 2) {
    std::map<std::pair<std::string, std::string>, HumanLabel> second;
    for (const auto& c : annotators[1]) {
      if (c.label) second[{c.cell_id, c.setting_blind_id}] = *c.label;
    }
    std::vector<std::string> a, b;
    for (const auto& c : annotators[0]) {
      if (!c.label) continue;
      auto it = second.find({c.cell_id, c.setting_blind_id});
      if (it == second.end()) continue;
      a.push_back(to_string(*c.label));
      b.push_back(to_string(it->second));
    }
    rep.kappa_items = a.size();
    if (!a.empty()) rep.kappa = stats::cohen_kappa(a, b);
  }
  return rep;
}

ojson ValueAnnotationReport::to_json() const {
  ojson j;
  j["settings"] = ojson::array();
  for (const auto& s : settings) {
    j["settings"].push_back({{"setting", s.setting},
                             {"n", s.total()},
                             {"complete", s.complete},
                             {"partial", s.partial},
                             {"none", s.none},
                             {"complete_share", stats::format_share(s.complete, s.total())},
                             {"partial_share", stats::format_share(s.partial, s.total())},
                             {"none_share", stats::format_share(s.none, s.total())}});
  }
  if (kappa) {
    j["cohen_kappa"] = {{"value", kappa->value}, {"degenerate", kappa->degenerate}, {"items", kappa_items}};
  } else {
    j["cohen_kappa"] = nullptr;
  }
  return j;
}

std::string ValueAnnotationReport::to_markdown() const {
  std::ostringstream o;
  o << "| Setting | Complete | Partial | None |\n|---|---|---|---|\n";
  for (const auto& s : settings) {
    o << "| " << s.setting << " | " << stats::format_share(s.complete, s.total()) << " | "
      << stats::format_share(s.partial, s.total()) << " | " << stats::format_share(s.none, s.total()) << " |\n";
  }
  if (kappa) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", kappa->value);
    o << "\nCohen's kappa: " << buf << " over " << kappa_items << " doubly labeled cells\n";
  }
  return o.str();
}

}  // namespace digesttab::value_eval
