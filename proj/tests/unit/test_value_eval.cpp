#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "digesttab/core/corpus_json.hpp"
#include "digesttab/gateway/stub_providers.hpp"
#include "digesttab/value_eval/value_eval.hpp"
#include "gen_stub.hpp"
#include "table_kit.hpp"
#include "test_util.hpp"

using namespace digesttab;
using namespace digesttab::value_eval;
using align::ScorerKind;

namespace {

tablegen::GenerationOptions fast() {
  tablegen::GenerationOptions o;
  o.workers = 2;
  return o;
}

ReviewTable reference(std::size_t rows = 2) {
  auto papers = testkit::stub_papers(rows);
  ReviewTable t;
  t.table_id = "ref-1";
  t.caption = "Comparison of stub systems";
  t.in_text_refs = {{"Results", "Table 1 compares the systems."}};
  t.aspects = {"Task", "Size"};
  for (const auto& p : papers) {
    t.row_keys.push_back(p.cite_id);
    t.papers.push_back(p);
    t.set_cell(p.cite_id, "Task", CellValue::of("task of " + p.cite_id));
    t.set_cell(p.cite_id, "Size", CellValue::of("10K"));
  }
  return t;
}

}  // namespace

TEST(ValueGen, FillsReferenceSchema) {
  auto stack = testkit::make_gen_stack();
  tablegen::TableGenerator gen(*stack.gateway, fast());
  auto ref = reference();
  auto out = generate_values_for_reference(gen, ref, Setting::ColumnNames);
  EXPECT_EQ(out.aspects, ref.aspects);
  EXPECT_EQ(out.row_keys, ref.row_keys);
  EXPECT_EQ(out.cells.size(), 4u);
  for (const auto& [k, v] : out.cells) EXPECT_FALSE(v.empty());
  EXPECT_EQ(stack.prompts_of(testkit::PromptKind::Value).size(), 4u);
  EXPECT_EQ(stack.prompts_of(testkit::PromptKind::Describe).size(), 0u);
  EXPECT_EQ(out.provenance["value_eval"]["setting"], "col-names");
  EXPECT_FALSE(out.papers[0].full_text.has_value());
  EXPECT_TRUE(validate_table(out).empty());
}

TEST(ValueGen, ContextSettingsUseCaptionFlow) {
  auto stack = testkit::make_gen_stack();
  tablegen::TableGenerator gen(*stack.gateway, fast());
  auto out = generate_values_for_reference(gen, reference(), Setting::AllContext);
  auto describes = stack.prompts_of(testkit::PromptKind::Describe);
  ASSERT_EQ(describes.size(), 2u);
  EXPECT_NE(describes[0].find("Table 1 compares the systems."), std::string::npos);
  EXPECT_EQ(out.provenance["value_eval"]["context"], "gold-caption-refs");

  auto s2 = testkit::make_gen_stack();
  tablegen::TableGenerator g2(*s2.gateway, fast());
  generate_values_for_reference(g2, reference(), Setting::CaptionContext);
  for (const auto& p : s2.prompts_of(testkit::PromptKind::Describe)) {
    EXPECT_EQ(p.find("Table 1 compares the systems."), std::string::npos);
  }
}

TEST(ValueGen, Preconditions) {
  auto stack = testkit::make_gen_stack();
  tablegen::TableGenerator gen(*stack.gateway, fast());
  auto ref = reference();
  ref.in_text_refs.clear();
  EXPECT_THROW(generate_values_for_reference(gen, ref, Setting::AllContext), PreconditionError);
  ref.caption.reset();
  EXPECT_THROW(generate_values_for_reference(gen, ref, Setting::CaptionContext), PreconditionError);
  auto no_text = reference();
  no_text.papers[1].full_text.reset();
  EXPECT_THROW(generate_values_for_reference(gen, no_text, Setting::ColumnNames), PreconditionError);
}

TEST(ValueGen, FailuresLeaveEmptyCellsAndKeepRows) {
  testkit::GenStubConfig cfg;
  cfg.value_malformed = true;
  auto stack = testkit::make_gen_stack(cfg);
  tablegen::TableGenerator gen(*stack.gateway, fast());
  auto out = generate_values_for_reference(gen, reference(3), Setting::ColumnNames);
  EXPECT_EQ(out.row_keys.size(), 3u);
  for (const auto& [k, v] : out.cells) EXPECT_TRUE(v.empty());
  EXPECT_EQ(out.provenance["value_eval"]["failed_cells"].size(), 6u);
  EXPECT_EQ(out.provenance["value_eval"]["empty_cells"], 6);
}

TEST(ValueGen, WarmCacheReplay) {
  testkit::TempDir dir;
  auto live = testkit::make_gen_stack({}, dir.path());
  tablegen::TableGenerator g1(*live.gateway, fast());
  auto first = generate_values_for_reference(g1, reference(), Setting::CaptionContext);

  gateway::GatewayOptions o;
  o.chat_provider_name = "gen-stub";
  o.cache_dir = dir.path();
  gateway::Gateway replay(o, nullptr, nullptr);
  tablegen::TableGenerator g2(replay, fast());
  auto second = generate_values_for_reference(g2, reference(), Setting::CaptionContext);
  EXPECT_EQ(serialize_table(first).dump(), serialize_table(second).dump());
  EXPECT_EQ(replay.stats().chat_network_calls, 0u);
}

TEST(ValueScore, WorkedExamples) {
  auto ref = testkit::table_of("t", {"Method", "Human eval", "Model"}, {{"DPO, PPO", "x"}, {"X", "y"}, {"BERT", ""}});
  auto gen = testkit::table_of("t", {"Method", "Human eval", "Model"}, {{"DPO", ""}, {"No", "y"}, {"BERT", "GPT"}});
  align::Aligner al(nullptr);
  auto s = score_values(ref, gen, {ScorerKind::ExactMatch, ScorerKind::Jaccard}, al);
  EXPECT_EQ(s.gold_empty, 1u);
  ASSERT_EQ(s.judgments.size(), 5u);
  auto find = [&](const std::string& row, const std::string& aspect) {
    return *std::find_if(s.judgments.begin(), s.judgments.end(),
                         [&](const auto& j) { return j.row == row && j.aspect == aspect; });
  };
  EXPECT_EQ(find("r0", "Method").auto_scores.at("jaccard"), 0.5);
  EXPECT_EQ(find("r0", "Human eval").auto_scores.at("exact"), 0.0);
  EXPECT_EQ(find("r0", "Human eval").auto_scores.at("jaccard"), 0.0);
  EXPECT_EQ(find("r0", "Model").auto_scores.at("exact"), 1.0);
  EXPECT_EQ(find("r1", "Method").auto_scores.at("jaccard"), 0.0);  // generated empty
  EXPECT_EQ(find("r1", "Human eval").auto_scores.at("exact"), 1.0);
  auto summary = s.summary_json();
  EXPECT_EQ(summary["gold_empty_excluded"], 1);
  EXPECT_EQ(summary["generated_empty"], 1);
  EXPECT_NE(s.judgments_jsonl().find("\"generated\":null"), std::string::npos);
}

TEST(ValueScore, SelfScoreIsOneForEveryScorer) {
  auto embed = std::make_shared<gateway::HashEmbedder>(16, 3);
  gateway::GatewayOptions o;
  o.embed_provider_name = "hash";
  o.embed_model_id = "hash-16";
  gateway::Gateway gw(o, nullptr, embed);
  align::Aligner al(&gw);
  auto ref = testkit::table_of("t", {"A", "B"}, {{"No", "the"}, {"3.5 BLEU", "graph neural networks"}});
  auto s = score_values(ref, ref, {ScorerKind::ExactMatch, ScorerKind::Jaccard, ScorerKind::EmbedCosine}, al);
  for (const auto& j : s.judgments) {
    for (const auto& [name, v] : j.auto_scores) EXPECT_NEAR(v, 1.0, 1e-6) << name << " on " << j.gold.text();
  }
}

TEST(ValueScore, RowPermutationPermutesJudgments) {
  auto ref = testkit::table_of("t", {"A"}, {{"alpha beta", "gamma", "delta"}});
  auto gen = testkit::table_of("t", {"A"}, {{"beta", "gamma", "x"}});
  align::Aligner al(nullptr);
  auto s = score_values(ref, gen, {ScorerKind::Jaccard}, al);
  auto pref = ref, pgen = gen;
  std::reverse(pref.row_keys.begin(), pref.row_keys.end());
  pgen.row_keys = pref.row_keys;
  auto p = score_values(pref, pgen, {ScorerKind::Jaccard}, al);
  ASSERT_EQ(p.judgments.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(p.judgments[i].row, s.judgments[2 - i].row);
    EXPECT_EQ(p.judgments[i].auto_scores, s.judgments[2 - i].auto_scores);
  }
}

TEST(ValueScore, Errors) {
  align::Aligner al(nullptr);
  auto ref = testkit::schema_table("t", {"A", "B"});
  EXPECT_THROW(score_values(ref, testkit::schema_table("t", {"A", "C"}), {ScorerKind::Jaccard}, al), SchemaMismatch);
  auto fewer = testkit::table_of("t", {"A", "B"}, {{"x", "x", "x"}, {"x", "x", "x"}});
  EXPECT_THROW(score_values(ref, fewer, {ScorerKind::Jaccard}, al), SchemaMismatch);
  EXPECT_THROW(score_values(ref, ref, {ScorerKind::LlmAligner}, al), ValidationError);
}

TEST(ValueAnnotations, ColumnNamesRowShares) {
  std::vector<LabeledCell> cells;
  for (int i = 0; i < 355; ++i) {
    HumanLabel l = i < 75 ? HumanLabel::Complete : i < 155 ? HumanLabel::Partial : HumanLabel::None;
    cells.push_back({"c" + std::to_string(i), "g", "v", "set-a", l});
  }
  auto rep = import_value_annotations({cells}, ojson{{"settings", {{"set-a", "col-names"}}}});
  ASSERT_EQ(rep.settings.size(), 1u);
  auto md = rep.to_markdown();
  EXPECT_NE(md.find("| col-names | 21.13% (75) | 22.54% (80) | 56.34% (200) |"), std::string::npos) << md;
  const auto& s = rep.settings[0];
  double sum = 100.0 * (s.complete + s.partial + s.none) / s.total();
  EXPECT_NEAR(sum, 100.0, 1e-9);
  EXPECT_FALSE(rep.kappa);
}

TEST(ValueAnnotations, KappaAcrossAnnotators) {
  std::vector<LabeledCell> a, b;
  const HumanLabel labels[] = {HumanLabel::Complete, HumanLabel::Partial, HumanLabel::None};
  for (int i = 0; i < 12; ++i) {
    a.push_back({"c" + std::to_string(i), "g", "v", "s", labels[i % 3]});
    b.push_back({"c" + std::to_string(i), "g", "v", "s", labels[i % 3]});
  }
  auto rep = import_value_annotations({a, b});
  ASSERT_TRUE(rep.kappa);
  EXPECT_EQ(rep.kappa->value, 1.0);
  EXPECT_EQ(rep.kappa_items, 12u);
  b[0].label = HumanLabel::None;
  EXPECT_LT(import_value_annotations({a, b}).kappa->value, 1.0);
}

TEST(ValueAnnotations, ExportImportRoundTrip) {
  align::Aligner al(nullptr);
  auto ref = testkit::table_of("t", {"A", "B"}, {{"x, y", "z"}, {"1", "2"}});
  auto gen = testkit::table_of("t", {"A", "B"}, {{"x", "z"}, {"1", ""}});
  auto s = score_values(ref, gen, {ScorerKind::Jaccard}, al);
  auto ex = export_value_annotations({{Setting::ColumnNames, s.judgments}, {Setting::AllContext, s.judgments}}, 5);
  EXPECT_EQ(ex.csv.find("col-names"), std::string::npos);
  auto cells = read_value_annotations(ex.csv);
  ASSERT_EQ(cells.size(), 8u);
  std::set<std::tuple<std::string, std::string, std::string>> keys;
  for (const auto& c : cells) {
    const auto& k = ex.key["cells"][c.cell_id];
    keys.insert({k["row"].get<std::string>(), k["aspect"].get<std::string>(),
                 ex.key["settings"][c.setting_blind_id].get<std::string>()});
    EXPECT_FALSE(c.label);
  }
  EXPECT_EQ(keys.size(), 8u);
  EXPECT_TRUE(keys.contains({"r1", "B", "all-context"}));
  EXPECT_THROW(read_value_annotations("cell_id,gold,generated,setting_blind_id,label\nc1,a,b,s,maybe\n"),
               ValidationError);
  EXPECT_THROW(read_value_annotations("cell,label\n"), ValidationError);
}
