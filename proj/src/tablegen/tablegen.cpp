#include "digesttab/tablegen/tablegen.hpp"

#include <algorithm>
#include <map>

#include "digesttab/core/json_extract.hpp"
#include "digesttab/core/parallel.hpp"
#include "digesttab/core/text.hpp"
#include "digesttab/corpus/corpus_store.hpp"
#include "digesttab/tablegen/prompts.hpp"

namespace digesttab::tablegen {

const char* to_string(ContextKind k) {
  switch (k) {
    case ContextKind::Baseline: return "baseline";
    case ContextKind::GeneratedCaption: return "gen-caption";
    case ContextKind::GoldCaption: return "gold-caption";
    case ContextKind::GoldCaptionWithRefs: return "gold-caption-refs";
    case ContextKind::FewShot: return "fewshot";
  }
  return "?";
}

ContextKind context_kind_from_string(const std::string& s) {
  static const std::map<std::string, ContextKind> names = {
      {"baseline", ContextKind::Baseline},        {"gen-caption", ContextKind::GeneratedCaption},
      {"gold-caption", ContextKind::GoldCaption}, {"gold-caption-refs", ContextKind::GoldCaptionWithRefs},
      {"fewshot", ContextKind::FewShot},
  };
  auto it = names.find(s);
  if (it == names.end()) throw ValidationError("unknown context kind '" + s + "'");
  return it->second;
}

void GenerationContext::validate() const {
  auto has_caption = caption && !text::is_blank(*caption);
  switch (kind) {
    case ContextKind::Baseline:
    case ContextKind::GeneratedCaption: break;
    case ContextKind::GoldCaption:
      if (!has_caption) throw PreconditionError("gold-caption context needs a caption");
      break;
    case ContextKind::GoldCaptionWithRefs:
      if (!has_caption) throw PreconditionError("gold-caption-refs context needs a caption");
      if (!in_text_refs) throw PreconditionError("gold-caption-refs context needs in-text references");
      break;
    case ContextKind::FewShot:
      if (!exemplars || exemplars->size() != kFewShotExemplars) {
        throw PreconditionError("fewshot context needs exactly " + std::to_string(kFewShotExemplars) +
                                " exemplar tables");
      }
      break;
  }
}

GenerationContext fewshot_context(const std::string& caption, const corpus::CaptionIndex& index,
                                  const std::vector<ReviewTable>& corpus, gateway::Gateway& gateway,
                                  const std::optional<std::string>& exclude_table_id) {
  GenerationContext ctx;
  ctx.kind = ContextKind::FewShot;
  ctx.caption = caption;
  std::map<std::string, const ReviewTable*> by_id;
  for (const auto& t : corpus) by_id[t.table_id] = &t;
  ctx.exemplars.emplace();
  for (const auto& [id, score] : index.nearest(caption, kFewShotExemplars, gateway, exclude_table_id)) {
    auto it = by_id.find(id);
    if (it != by_id.end()) ctx.exemplars->push_back(*it->second);
  }
  if (ctx.exemplars->size() != kFewShotExemplars) {
    throw PreconditionError("fewshot context: caption index returned " + std::to_string(ctx.exemplars->size()) +
                            " usable tables, need " + std::to_string(kFewShotExemplars));
  }
  return ctx;
}

std::vector<std::size_t> split_columns(std::size_t n_aspects, std::size_t n_batches) {
  if (n_batches == 0) throw PreconditionError("split_columns: no batches");
  if (n_aspects < n_batches) {
    throw PreconditionError("cannot spread " + std::to_string(n_aspects) + " aspects over " +
                            std::to_string(n_batches) + " paper batches; raise the batch size");
  }
  std::vector<std::size_t> out(n_batches, n_aspects / n_batches);
  for (std::size_t i = 0; i < n_aspects % n_batches; ++i) ++out[i];
  return out;
}

namespace {

std::string utf8_prefix(const std::string& s, std::size_t bytes) {
  if (bytes >= s.size()) return s;
  while (bytes > 0 && (static_cast<unsigned char>(s[bytes]) & 0xC0) == 0x80) --bytes;
  return s.substr(0, bytes);
}

bool looks_like_header(const std::string& line) {
  auto t = text::trim(line);
  if (t.empty() || t.size() > 80) return false;
  if (text::whitespace_tokens(t).size() > 10) return false;
  char last = t.back();
  if (last == '.' || last == ',' || last == ';' || last == ':') return false;
  return std::any_of(t.begin(), t.end(), [](unsigned char c) { return std::isalpha(c); });
}

}  // namespace

std::string fit_full_text(const std::string& full_text, const std::string& aspect, std::size_t budget) {
  if (full_text.size() <= budget) return full_text;
  std::set<std::string> want;
  for (auto& w : text::word_tokens(aspect)) {
    if (text::utf8_length(w) >= 3) want.insert(w);
  }
  // sections start at header-like lines
  struct Section {
    std::size_t begin, end;
    bool match;
  };
  std::vector<Section> sections;
  std::size_t pos = 0;
  while (pos < full_text.size()) {
    auto nl = full_text.find('\n', pos);
    auto end = nl == std::string::npos ? full_text.size() : nl + 1;
    std::string line = full_text.substr(pos, end - pos);
    if (looks_like_header(line) || sections.empty()) {
      bool match = false;
      if (looks_like_header(line)) {
        for (auto& w : text::word_tokens(line)) match = match || want.contains(w);
      }
      sections.push_back({pos, end, match});
    } else {
      sections.back().end = end;
    }
    pos = end;
  }
  bool any = std::any_of(sections.begin(), sections.end(), [](const Section& s) { return s.match; });
  std::size_t head_budget = any ? budget / 2 : budget;
  std::string out = utf8_prefix(full_text, head_budget);
  for (const auto& s : sections) {
    if (!s.match || s.end <= head_budget) continue;
    std::size_t begin = std::max(s.begin, head_budget);
    std::string piece = "\n...\n" + full_text.substr(begin, s.end - begin);
    if (out.size() >= budget) break;
    out += utf8_prefix(piece, budget - out.size());
  }
  return out;
}

std::vector<std::string> clip_excerpts(std::vector<std::string> excerpts) {
  if (excerpts.size() > kMaxExcerpts) excerpts.resize(kMaxExcerpts);
  std::size_t words = 0;
  for (std::size_t i = 0; i < excerpts.size(); ++i) {
    auto toks = text::whitespace_tokens(excerpts[i]);
    if (words + toks.size() > kMaxExcerptWords) {
      toks.resize(kMaxExcerptWords - words);
      excerpts[i] = text::join(toks, " ");
      excerpts.resize(toks.empty() ? i : i + 1);
      break;
    }
    words += toks.size();
  }
  return excerpts;
}

namespace {

void check_papers(const std::vector<PaperRecord>& papers, bool need_full_text) {
  if (papers.size() < 2) throw PreconditionError("generation needs at least 2 papers");
  std::set<std::string> ids;
  for (const auto& p : papers) {
    if (p.cite_id.empty() || !ids.insert(p.cite_id).second) {
      throw PreconditionError("paper ids must be non-empty and distinct ('" + p.cite_id + "')");
    }
    if (text::is_blank(p.title) || !p.abstract || text::is_blank(*p.abstract)) {
      throw PreconditionError("paper '" + p.cite_id + "' lacks a title or abstract");
    }
    if (need_full_text && (!p.full_text || text::is_blank(*p.full_text))) {
      throw PreconditionError("paper '" + p.cite_id + "' has no full text");
    }
  }
}

std::string cell_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "";
  if (v.is_array()) {
    std::vector<std::string> parts;
    for (const auto& e : v) parts.push_back(cell_string(e));
    return text::join(parts, ", ");
  }
  return v.dump();
}

// Distinct, non-blank names after trimming; nullopt otherwise.
std::optional<std::vector<std::string>> clean_names(const nlohmann::json& arr, std::size_t want) {
  if (!arr.is_array() || arr.size() != want) return std::nullopt;
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& e : arr) {
    if (!e.is_string()) return std::nullopt;
    auto s = text::collapse_whitespace(e.get<std::string>());
    if (s.empty() || s == kReferencesColumn || !seen.insert(text::normalize_for_match(s)).second) return std::nullopt;
    out.push_back(s);
  }
  return out;
}

// Appends `name` to `taken`, suffixing " (2)", " (3)"... on a clash.
std::string unique_name(const std::string& name, std::vector<std::string>& taken, std::vector<std::string>& clashes) {
  auto exists = [&](const std::string& n) { return std::find(taken.begin(), taken.end(), n) != taken.end(); };
  std::string out = name;
  for (int k = 2; exists(out); ++k) out = name + " (" + std::to_string(k) + ")";
  if (out != name) clashes.push_back(name);
  taken.push_back(out);
  return out;
}

std::vector<PaperRecord> without_full_text(const std::vector<PaperRecord>& papers) {
  auto out = papers;
  for (auto& p : out) p.full_text.reset();
  return out;
}

}  // namespace

TableGenerator::TableGenerator(gateway::Gateway& gateway, GenerationOptions options)
    : gateway_(gateway), options_(std::move(options)) {
  if (options_.batch_size == 0) throw ValidationError("batch_size must be at least 1");
  if (options_.max_attempts < 1) throw ValidationError("max_attempts must be at least 1");
  options_.retry_variants = std::min<std::size_t>(options_.retry_variants, 4);
}

GenerationTrace TableGenerator::trace() const {
  std::lock_guard lock(mu_);
  return trace_;
}

void TableGenerator::reset_trace() {
  std::lock_guard lock(mu_);
  trace_ = {};
}

gateway::ChatResponse TableGenerator::call(const std::string& model_id, const std::string& prompt, bool with_system) {
  gateway::ChatRequest req;
  req.model_id = model_id;
  if (with_system) req.system = prompts::kSystem;
  req.messages.push_back({"user", prompt});
  req.max_tokens = options_.max_tokens;
  req.temperature = options_.temperature;
  auto resp = gateway_.chat(req);
  std::lock_guard lock(mu_);
  ++trace_.calls;
  if (!resp.digest.empty()) trace_.digests.insert(resp.digest);
  return resp;
}

template <typename Accept>
void TableGenerator::run_with_retries(const std::string& what, const std::string& model_id,
                                      const std::string& prompt, bool with_system, Accept&& accept) {
  std::string last = "none";
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    std::string p = prompt;
    if (attempt > 1) {
      p += prompts::format_reminder(attempt);
      std::lock_guard lock(mu_);
      ++trace_.retries;
      ++trace_.reminder_retries;
    }
    gateway::ChatResponse resp;
    try {
      resp = call(model_id, p, with_system);
    } catch (const gateway::ProviderError& e) {
      if (e.failure() != gateway::ProviderFailure::ContextOverflow) throw;
      last = "context overflow";
      continue;
    }
    if (resp.finish_reason == gateway::FinishReason::Length) {
      last = "response truncated at max_tokens";
      continue;
    }
    std::string why;
    if (accept(resp.text, why)) return;
    last = why;
  }
  throw GenerationFailed(what + ": no usable response after " + std::to_string(options_.max_attempts) +
                         " attempts (last problem: " + last + ")");
}

std::vector<std::vector<std::size_t>> TableGenerator::paper_batches(std::size_t n_papers) const {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n_papers; ++i) {
    if (i % options_.batch_size == 0) out.emplace_back();
    out.back().push_back(i);
  }
  return out;
}

ReviewTable TableGenerator::generate_joint(const std::vector<PaperRecord>& papers, std::size_t n_aspects) {
  check_papers(papers, false);
  if (n_aspects < 2) throw PreconditionError("n_aspects must be at least 2");
  reset_trace();
  auto batches = paper_batches(papers.size());
  auto cols = split_columns(n_aspects, batches.size());

  ReviewTable t;
  t.table_id = "generated";
  for (const auto& p : papers) t.row_keys.push_back(p.cite_id);
  t.papers = without_full_text(papers);
  std::vector<std::string> clashes;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    std::vector<PaperRecord> batch;
    for (auto i : batches[b]) batch.push_back(papers[i]);
    auto k = std::to_string(cols[b]);
    auto prompt = prompts::fill(prompts::kJointTable, {{"col_num", k},
                                                       {"column_num", k},
                                                       {"paper_num", std::to_string(batch.size())},
                                                       {"json_format", prompts::kJointJsonFormat},
                                                       {"papers", prompts::render_papers(batch)}});
    std::vector<std::string> names;
    std::vector<std::vector<std::string>> values;  // [paper][aspect]
    run_with_retries("joint table", options_.model_id, prompt, true, [&](const std::string& out, std::string& why) {
      auto j = extract_json(out, JsonShape::Object);
      if (!j) return why = "no JSON object", false;
      if (j->size() != batch.size()) return why = "expected " + std::to_string(batch.size()) + " papers", false;
      std::vector<std::string> got_names;
      std::vector<std::vector<std::string>> got_values;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        auto key = "Paper " + std::to_string(i + 1);
        if (!j->contains(key) || !(*j)[key].is_object()) return why = "missing " + key, false;
        const auto& row = (*j)[key];
        if (i == 0) {
          nlohmann::json keys = nlohmann::json::array();
          for (auto it = row.begin(); it != row.end(); ++it) keys.push_back(it.key());
          auto clean = clean_names(keys, cols[b]);
          if (!clean) return why = "expected " + std::to_string(cols[b]) + " distinct dimensions", false;
          got_names = *clean;
        }
        if (row.size() != cols[b]) return why = key + " has " + std::to_string(row.size()) + " dimensions", false;
        std::vector<std::string> vals;
        for (auto it = row.begin(); it != row.end(); ++it) {
          auto pos = std::find(got_names.begin(), got_names.end(), text::collapse_whitespace(it.key()));
          if (pos == got_names.end()) return why = key + " uses a different set of dimensions", false;
        }
        for (const auto& n : got_names) {
          std::string v;
          for (auto it = row.begin(); it != row.end(); ++it) {
            if (text::collapse_whitespace(it.key()) == n) v = cell_string(it.value());
          }
          vals.push_back(v);
        }
        got_values.push_back(std::move(vals));
      }
      names = std::move(got_names);
      values = std::move(got_values);
      return true;
    });
    for (std::size_t a = 0; a < names.size(); ++a) {
      auto name = unique_name(names[a], t.aspects, clashes);
      for (std::size_t r = 0; r < papers.size(); ++r) t.set_cell(papers[r].cite_id, name, CellValue::blank());
      for (std::size_t i = 0; i < batches[b].size(); ++i) {
        t.set_cell(papers[batches[b][i]].cite_id, name, CellValue::of(values[i][a]));
      }
    }
  }
  {
    std::lock_guard lock(mu_);
    trace_.aspect_collisions = clashes;
    for (auto& b : batches) trace_.batches.push_back(b.size());
  }
  t.provenance["generation"] = provenance_block("joint", nullptr);
  return t;
}

std::vector<std::string> TableGenerator::schema_for_batch(const std::vector<PaperRecord>& papers,
                                                          std::size_t first_index, std::size_t n_aspects,
                                                          const GenerationContext& context) {
  const auto k = std::to_string(n_aspects);
  const auto rendered = prompts::render_papers(papers, first_index);
  std::string prompt;
  bool nested = false;
  switch (context.kind) {
    case ContextKind::Baseline:
      prompt = prompts::fill(prompts::kSchemaNoContext, {{"num_columns", k}, {"papers", rendered}});
      nested = true;
      break;
    case ContextKind::GeneratedCaption:
    case ContextKind::GoldCaption:
      prompt = prompts::fill(prompts::kSchemaCaption,
                             {{"caption", context.caption.value_or("")}, {"refs_block", ""}, {"num_columns", k},
                              {"papers", rendered}});
      break;
    case ContextKind::GoldCaptionWithRefs: {
      auto block = prompts::fill(prompts::kSchemaCaptionRefsBlock,
                                 {{"in_text_refs", prompts::render_in_text_refs(*context.in_text_refs)}});
      prompt = prompts::fill(prompts::kSchemaCaption, {{"caption", *context.caption},
                                                       {"refs_block", block},
                                                       {"num_columns", k},
                                                       {"papers", rendered}});
      break;
    }
    case ContextKind::FewShot: {
      std::string ex;
      for (std::size_t i = 0; i < context.exemplars->size(); ++i) {
        if (i) ex += "\n";
        ex += "Table " + std::to_string(i + 1) + ": " + prompts::render_exemplar((*context.exemplars)[i]);
      }
      prompt = prompts::fill(prompts::kSchemaFewShot, {{"exemplars", ex}, {"num_columns", k}, {"papers", rendered}});
      break;
    }
  }
  std::vector<std::string> names;
  run_with_retries("schema", options_.model_id, prompt, true, [&](const std::string& out, std::string& why) {
    if (nested) {
      // {"<aspect>": ["<attribute>", ...]}: the first aspect offering the requested count wins
      auto j = extract_json(out, JsonShape::Object);
      if (!j) return why = "no JSON object", false;
      for (const auto& [key, list] : j->items()) {
        if (auto clean = clean_names(list, n_aspects)) {
          names = *clean;
          return true;
        }
      }
      return why = "no aspect with " + k + " distinct attributes", false;
    }
    auto j = extract_json(out, JsonShape::Array);
    if (!j) return why = "no JSON list", false;
    auto clean = clean_names(*j, n_aspects);
    if (!clean) return why = "expected " + k + " distinct column names", false;
    names = *clean;
    return true;
  });
  return names;
}

Schema TableGenerator::generate_schema(const std::vector<PaperRecord>& papers, std::size_t n_aspects,
                                       const GenerationContext& context_in) {
  check_papers(papers, false);
  if (n_aspects < 2) throw PreconditionError("n_aspects must be at least 2");
  context_in.validate();
  GenerationContext context = context_in;
  if (context.kind == ContextKind::GeneratedCaption && (!context.caption || text::is_blank(*context.caption))) {
    context.caption = generate_caption(papers);
  }
  auto batches = paper_batches(papers.size());
  auto cols = split_columns(n_aspects, batches.size());
  Schema schema;
  std::vector<std::string> clashes;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    std::vector<PaperRecord> batch;
    for (auto i : batches[b]) batch.push_back(papers[i]);
    for (auto& name : schema_for_batch(batch, 1, cols[b], context)) {
      unique_name(name, schema.aspects, clashes);
    }
  }
  {
    std::lock_guard lock(mu_);
    trace_.aspect_collisions.insert(trace_.aspect_collisions.end(), clashes.begin(), clashes.end());
    trace_.batches.clear();
    for (auto& b : batches) trace_.batches.push_back(b.size());
  }
  check_schema(schema);
  return schema;
}

std::string TableGenerator::generate_caption(const std::vector<PaperRecord>& papers) {
  check_papers(papers, false);
  auto prompt = prompts::fill(prompts::kCaption, {{"paper_num", std::to_string(papers.size())},
                                                  {"papers", prompts::render_papers(papers)}});
  std::string caption;
  run_with_retries("caption", options_.model_id, prompt, true, [&](const std::string& out, std::string& why) {
    auto c = text::collapse_whitespace(out);
    if (c.rfind("Caption:", 0) == 0) c = text::trim(c.substr(8));
    if (c.size() >= 2 && c.front() == '"' && c.back() == '"') c = text::trim(c.substr(1, c.size() - 2));
    if (c.empty()) return why = "empty caption", false;
    caption = c;
    return true;
  });
  return caption;
}

ValueQuery TableGenerator::build_value_query(const std::string& aspect, const GenerationContext& context) {
  if (text::is_blank(aspect)) throw PreconditionError("build_value_query: blank aspect");
  ValueQuery q;
  q.aspect = aspect;
  bool has_caption = context.caption && !text::is_blank(*context.caption);
  if (context.kind == ContextKind::Baseline || !has_caption) {
    q.question = prompts::fill(prompts::kNoContextQuery, {{"column", aspect}});
    for (std::size_t i = 0; i < 4; ++i) q.retry_variants[i] = prompts::fill(prompts::kNoContextRetries[i], {{"column", aspect}});
    return q;
  }
  std::string prompt;
  if (context.kind == ContextKind::GoldCaptionWithRefs && context.in_text_refs) {
    std::vector<std::string> refs;
    for (const auto& r : *context.in_text_refs) refs.push_back(r.section + ": " + r.text);
    prompt = prompts::fill(prompts::kDescribeCaptionWithRef,
                           {{"column", aspect}, {"caption", *context.caption}, {"in_text_ref", text::join(refs, " ")}});
  } else {
    prompt = prompts::fill(prompts::kDescribeCaption, {{"column", aspect}, {"caption", *context.caption}});
  }
  std::string description;
  run_with_retries("column description", options_.query_model_id, prompt, false,
                   [&](const std::string& out, std::string& why) {
                     description = text::trim(out);
                     if (description.empty()) return why = "empty description", false;
                     return true;
                   });
  q.description = description;
  std::string question;
  run_with_retries("column question", options_.query_model_id, description + "\n\n" + prompts::kContextQuery, false,
                   [&](const std::string& out, std::string& why) {
                     std::size_t pos = 0;
                     while (pos <= out.size()) {
                       auto nl = out.find('\n', pos);
                       if (nl == std::string::npos) nl = out.size();
                       auto l = text::trim(std::string_view(out).substr(pos, nl - pos));
                       pos = nl + 1;
                       if (l.size() >= 2 && l.front() == '"' && l.back() == '"') l = text::trim(l.substr(1, l.size() - 2));
                       if (!l.empty()) {
                         question = l;
                         return true;
                       }
                     }
                     return why = "empty question", false;
                   });
  q.question = question;
  for (std::size_t i = 0; i < 4; ++i) q.retry_variants[i] = question + " " + prompts::kContextRetrySuffixes[i];
  return q;
}

CellAnswer TableGenerator::generate_value(const PaperRecord& paper, const ValueQuery& query) {
  if (!paper.full_text || text::is_blank(*paper.full_text)) {
    throw PreconditionError("paper '" + paper.cite_id + "' has no full text");
  }
  if (text::is_blank(query.question)) throw PreconditionError("value query has a blank question");
  std::vector<std::string> questions = {query.question};
  for (std::size_t i = 0; i < options_.retry_variants; ++i) questions.push_back(query.retry_variants[i]);

  std::size_t budget = options_.value_context_chars;
  std::string body = fit_full_text(*paper.full_text, query.aspect, budget);
  if (body.size() < paper.full_text->size()) {
    std::lock_guard lock(mu_);
    ++trace_.truncated_texts;
  }
  int bad = 0;
  std::string last = "none";
  for (std::size_t qi = 0; qi < questions.size(); ++qi) {
    for (;;) {
      auto prompt = prompts::fill(prompts::kValue, {{" full_text ", body}, {" question ", questions[qi]}});
      if (bad > 0) {
        prompt += prompts::format_reminder(bad + 1);
        std::lock_guard lock(mu_);
        ++trace_.retries;
        ++trace_.reminder_retries;
      }
      gateway::ChatResponse resp;
      try {
        resp = call(options_.value_model_id, prompt, false);
      } catch (const gateway::ProviderError& e) {
        if (e.failure() != gateway::ProviderFailure::ContextOverflow) throw;
        if (++bad >= options_.max_attempts) {
          throw GenerationFailed("value for '" + paper.cite_id + "'/'" + query.aspect + "': context overflow");
        }
        budget = std::max<std::size_t>(budget / 2, 1);
        body = fit_full_text(*paper.full_text, query.aspect, budget);
        continue;
      }
      auto j = resp.finish_reason == gateway::FinishReason::Length ? std::nullopt
                                                                    : extract_json(resp.text, JsonShape::Object);
      if (!j) {
        if (++bad >= options_.max_attempts) {
          throw MalformedJson("value for '" + paper.cite_id + "'/'" + query.aspect + "': no JSON object after " +
                              std::to_string(bad) + " attempts");
        }
        continue;
      }
      std::string answer = j->contains("answer") ? text::trim(cell_string((*j)["answer"])) : "";
      if (answer.empty()) break;  // the empty-object sentinel: try the next phrasing
      CellAnswer out;
      out.answer = answer;
      out.empty = false;
      if (j->contains("excerpts") && (*j)["excerpts"].is_array()) {
        for (const auto& e : (*j)["excerpts"]) {
          if (e.is_string()) out.excerpts.push_back(e.get<std::string>());
        }
      }
      out.excerpts = clip_excerpts(std::move(out.excerpts));
      return out;
    }
  }
  return CellAnswer{};
}

std::vector<CellValue> TableGenerator::rewrite_column(const std::vector<CellAnswer>& values, const std::string& aspect,
                                                      bool* degraded) {
  if (values.empty()) throw PreconditionError("rewrite_column: no values");
  if (degraded) *degraded = false;
  std::vector<CellValue> out(values.size(), CellValue::blank());
  nlohmann::json originals = nlohmann::json::array();
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].empty || text::is_blank(values[i].answer)) continue;
    idx.push_back(i);
    originals.push_back(values[i].answer);
    out[i] = CellValue::of(values[i].answer);
  }
  if (idx.empty()) return out;
  auto prompt = prompts::fill(prompts::kRewrite, {{"column", aspect},
                                                  {"values", originals.dump(-1, ' ', false)},
                                                  {"count", std::to_string(idx.size())}});
  std::vector<std::string> rewritten;
  try {
    run_with_retries("rewrite", options_.rewrite_model_id, prompt, false, [&](const std::string& o, std::string& why) {
      auto j = extract_json(o, JsonShape::Array);
      if (!j || j->size() != idx.size()) return why = "expected a list of " + std::to_string(idx.size()), false;
      std::vector<std::string> got;
      for (const auto& e : *j) {
        if (!e.is_string()) return why = "non-string entry", false;
        got.push_back(text::trim(e.get<std::string>()));
      }
      rewritten = std::move(got);
      return true;
    });
  } catch (const GenerationFailed&) {
    if (degraded) *degraded = true;
    std::lock_guard lock(mu_);
    trace_.degraded_columns.push_back(aspect);
    return out;
  }
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (!rewritten[k].empty()) out[idx[k]] = CellValue::of(rewritten[k]);
  }
  return out;
}

ReviewTable TableGenerator::generate_table_decomposed(const std::vector<PaperRecord>& papers, std::size_t n_aspects,
                                                      GenerationContext context) {
  check_papers(papers, true);
  if (n_aspects < 2) throw PreconditionError("n_aspects must be at least 2");
  context.validate();
  reset_trace();
  std::optional<std::string> generated_caption;
  if (context.kind == ContextKind::GeneratedCaption && (!context.caption || text::is_blank(*context.caption))) {
    context.caption = generate_caption(papers);
    generated_caption = context.caption;
  }
  auto schema = generate_schema(papers, n_aspects, context);
  const auto& aspects = schema.aspects;

  std::vector<ValueQuery> queries(aspects.size());
  parallel_for(aspects.size(), options_.workers, [&](std::size_t a) { queries[a] = build_value_query(aspects[a], context); });

  const std::size_t n_cells = papers.size() * aspects.size();
  std::vector<CellAnswer> answers(n_cells);
  parallel_for(n_cells, options_.workers, [&](std::size_t c) {
    answers[c] = generate_value(papers[c % papers.size()], queries[c / papers.size()]);
  });

  std::vector<std::vector<CellValue>> columns(aspects.size());
  std::vector<char> degraded(aspects.size(), 0);
  parallel_for(aspects.size(), options_.workers, [&](std::size_t a) {
    std::vector<CellAnswer> col(answers.begin() + static_cast<std::ptrdiff_t>(a * papers.size()),
                                answers.begin() + static_cast<std::ptrdiff_t>((a + 1) * papers.size()));
    bool d = false;
    columns[a] = rewrite_column(col, aspects[a], &d);
    degraded[a] = d;
  });

  ReviewTable t;
  t.table_id = "generated";
  t.aspects = aspects;
  for (const auto& p : papers) t.row_keys.push_back(p.cite_id);
  t.papers = without_full_text(papers);
  std::size_t empty = 0;
  for (std::size_t a = 0; a < aspects.size(); ++a) {
    for (std::size_t r = 0; r < papers.size(); ++r) {
      t.set_cell(papers[r].cite_id, aspects[a], columns[a][r]);
      if (columns[a][r].empty()) ++empty;
    }
  }
  {
    std::lock_guard lock(mu_);
    trace_.empty_cells = empty;
    // parallel completion order must not leak into the output
    std::vector<std::string> deg;
    for (std::size_t a = 0; a < aspects.size(); ++a) {
      if (degraded[a]) deg.push_back(aspects[a]);
    }
    trace_.degraded_columns = deg;
  }
  auto prov = provenance_block("decomposed", &context);
  if (generated_caption) prov["generated_caption"] = *generated_caption;
  nlohmann::ordered_json qs = nlohmann::ordered_json::object();
  for (const auto& q : queries) qs[q.aspect] = q.question;
  prov["questions"] = qs;
  t.provenance["generation"] = prov;
  auto violations = validate_table(t);
  if (!violations.empty()) throw GenerationFailed("generated table is invalid: " + violations.front().message);
  return t;
}

ojson TableGenerator::provenance_block(const std::string& mode, const GenerationContext* context) const {
  auto tr = trace();
  ojson p;
  p["mode"] = mode;
  p["model_id"] = options_.model_id;
  if (mode == "decomposed") {
    p["query_model_id"] = options_.query_model_id;
    p["value_model_id"] = options_.value_model_id;
    p["rewrite_model_id"] = options_.rewrite_model_id;
  }
  p["context"] = context ? to_string(context->kind) : "baseline";
  if (context && context->kind == ContextKind::FewShot) p["exemplar_format"] = prompts::kExemplarFormat;
  p["batches"] = tr.batches;
  p["calls"] = tr.calls;
  p["retries_used"] = tr.retries;
  p["format_reminder_retries"] = tr.reminder_retries;
  if (mode == "decomposed") {
    p["retry_variants"] = options_.retry_variants;
    p["empty_cells"] = tr.empty_cells;
    p["truncated_texts"] = tr.truncated_texts;
    p["degraded_columns"] = tr.degraded_columns;
  }
  p["aspect_collisions"] = tr.aspect_collisions;
  p["cache_digests"] = std::vector<std::string>(tr.digests.begin(), tr.digests.end());
  return p;
}

}  // namespace digesttab::tablegen
