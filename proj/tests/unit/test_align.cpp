#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "digesttab/align/align.hpp"
#include "digesttab/core/corpus_json.hpp"
#include "digesttab/core/text.hpp"
#include "digesttab/gateway/stub_providers.hpp"
#include "table_kit.hpp"
#include "test_util.hpp"

using namespace digesttab;
using namespace digesttab::align;
using testkit::schema_table;
using testkit::table_of;

namespace {

const nlohmann::json& expected() {
  static const auto j = nlohmann::json::parse(read_file(testkit::fixtures() / "align" / "expected.json"));
  return j;
}

struct Stack {
  std::shared_ptr<gateway::ScriptedChatProvider> chat;
  std::shared_ptr<gateway::HashEmbedder> embed;
  std::unique_ptr<gateway::Gateway> gw;
};

Stack make_stack(gateway::ScriptedChatProvider::Script script = [](const gateway::ChatRequest&) { return "[]"; },
                 std::shared_ptr<gateway::EmbedProvider> embed = nullptr) {
  Stack s;
  s.chat = std::make_shared<gateway::ScriptedChatProvider>(std::move(script), "align-stub");
  s.embed = std::make_shared<gateway::HashEmbedder>(32, 7);
  gateway::GatewayOptions o;
  o.chat_provider_name = "align-stub";
  o.embed_provider_name = "hash";
  o.embed_model_id = "hash-32";
  o.backoff_base = std::chrono::milliseconds(0);
  s.gw = std::make_unique<gateway::Gateway>(o, s.chat, embed ? embed : s.embed);
  return s;
}

// Expands the abbreviation the way a description model would.
std::string decontext_stub(const gateway::ChatRequest& r) {
  const auto& p = r.messages.back().content;
  auto start = p.find("named \"") + 7;
  auto name = p.substr(start, p.find('"', start) - start);
  if (p.find("- VQA") != std::string::npos) return "The " + name + " studied, such as video question answering.";
  return "What the paper reports as " + name + ".";
}

}  // namespace

TEST(Featurize, NameValuesDecontext) {
  auto t = table_of("t", {"Task", "Size"}, {{"VQA", "classification"}, {"10K", ""}});
  Aligner plain(nullptr);
  EXPECT_EQ(plain.featurize("Task", t, FeaturizerMode::Name), "Task");
  EXPECT_EQ(plain.featurize("Task", t, FeaturizerMode::Values), "Task: VQA; classification");
  EXPECT_EQ(plain.featurize("Size", t, FeaturizerMode::Values), "Size: 10K");
  EXPECT_THROW(plain.featurize("Task", t, FeaturizerMode::Decontext), PreconditionError);
  EXPECT_THROW(plain.featurize("Nope", t, FeaturizerMode::Name), PreconditionError);

  auto s = make_stack(decontext_stub);
  Aligner a(s.gw.get());
  auto d = a.featurize("Task", t, FeaturizerMode::Decontext);
  EXPECT_NE(d.find("video question answering"), std::string::npos);
  EXPECT_EQ(s.chat->call_count(), 1u);
  EXPECT_EQ(a.featurize("Task", t, FeaturizerMode::Decontext), d);
  EXPECT_EQ(s.chat->call_count(), 1u) << "second call should come from the cache";
  auto prompt = s.chat->calls()[0].messages.back().content;
  EXPECT_NE(prompt.find("stand-alone description"), std::string::npos);
  EXPECT_NE(prompt.find("- classification\n"), std::string::npos);
}

TEST(Featurize, DecontextRetriesBlankAnswers) {
  int n = 0;
  auto s = make_stack([&](const gateway::ChatRequest&) { return ++n < 3 ? std::string("  ") : std::string("ok"); });
  Aligner a(s.gw.get());
  auto t = schema_table("t", {"A", "B"});
  EXPECT_EQ(a.featurize("A", t, FeaturizerMode::Decontext), "ok");
  auto s2 = make_stack([](const gateway::ChatRequest&) { return std::string(""); });
  Aligner b(s2.gw.get());
  EXPECT_THROW(b.featurize("A", t, FeaturizerMode::Decontext), GenerationFailed);
  EXPECT_EQ(s2.chat->call_count(), 5u);
}

TEST(ExactMatch, NormalizesAndIsReflexiveSymmetric) {
  EXPECT_EQ(exact_match("task", "task"), 1.0);
  EXPECT_EQ(exact_match("  Task\tType ", "task type"), 1.0);
  EXPECT_EQ(exact_match("Café", "CAFÉ"), 1.0);
  EXPECT_EQ(exact_match("task", "tasks"), 0.0);
  std::mt19937 rng(17);
  const std::string alphabet = "abcAB C\té";
  for (int i = 0; i < 100; ++i) {
    std::string a, b;
    for (int k = 0; k < 6; ++k) a += alphabet[rng() % alphabet.size()];
    for (int k = 0; k < 6; ++k) b += alphabet[rng() % alphabet.size()];
    a = text::nfc(a);  // the random cut can split a multi-byte character
    b = text::nfc(b);
    EXPECT_EQ(exact_match(a, a), 1.0);
    EXPECT_EQ(exact_match(a, b), exact_match(b, a));
  }
}

TEST(Jaccard, WorkedExamples) {
  EXPECT_EQ(jaccard("size of the dataset", "dataset size"), 1.0);
  EXPECT_EQ(jaccard("task", "application"), 0.0);
  EXPECT_EQ(jaccard("DPO, PPO", "DPO"), 0.5);
  EXPECT_EQ(jaccard("X", "No"), 0.0);
  EXPECT_EQ(jaccard("No", "no"), 1.0);
  EXPECT_EQ(jaccard("...", "--"), 0.0);
  EXPECT_EQ(stopwords().size(), expected()["stopword_count"].get<std::size_t>());
}

TEST(Jaccard, MatchesIndependentSetComputation) {
  const auto& pairs = expected()["jaccard_pairs"];
  ASSERT_EQ(pairs.size(), 200u);
  for (const auto& p : pairs) {
    auto a = p["a"].get<std::string>(), b = p["b"].get<std::string>();
    EXPECT_EQ(jaccard(a, b), p["jaccard"].get<double>()) << a << " | " << b;
    EXPECT_EQ(jaccard(a, b), jaccard(b, a));
  }
}

TEST(EmbedCosine, HandCosines) {
  auto table = std::make_shared<gateway::TableEmbedder>(std::vector<std::pair<std::string, gateway::Vector>>{
      {"a", {1, 0, 0}}, {"b", {1, 1, 0}}, {"c", {1, 2, 3}}, {"d", {-1, 0, 1}}, {"e", {-1, 0, 0}}});
  auto s = make_stack({}, table);
  Aligner al(s.gw.get());
  EXPECT_NEAR(al.score_pair("a", "b", ScorerKind::EmbedCosine), 1.0 / std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(al.score_pair("c", "d", ScorerKind::EmbedCosine), 2.0 / (std::sqrt(14.0) * std::sqrt(2.0)), 1e-9);
  EXPECT_EQ(al.score_pair("a", "e", ScorerKind::EmbedCosine), 0.0);
  EXPECT_NEAR(al.score_pair("c", "c", ScorerKind::EmbedCosine), 1.0, 1e-9);
}

TEST(EmbedCosine, SeededStubMatchesManualCosine) {
  auto s = make_stack();
  Aligner al(s.gw.get());
  const std::vector<std::string> words{"dataset size", "number of examples", "task", "model", "year"};
  for (const auto& x : words) {
    for (const auto& y : words) {
      auto vx = s.embed->vector_for(x), vy = s.embed->vector_for(y);
      double dot = 0, nx = 0, ny = 0;
      for (std::size_t i = 0; i < vx.size(); ++i) {
        dot += double(vx[i]) * vy[i];
        nx += double(vx[i]) * vx[i];
        ny += double(vy[i]) * vy[i];
      }
      double want = std::max(0.0, dot / std::sqrt(nx * ny));
      EXPECT_NEAR(al.score_pair(x, y, ScorerKind::EmbedCosine), want, 1e-9);
      EXPECT_EQ(al.score_pair(x, y, ScorerKind::EmbedCosine), al.score_pair(y, x, ScorerKind::EmbedCosine));
    }
  }
  EXPECT_THROW(al.score_pair("", "x", ScorerKind::Jaccard), PreconditionError);
  EXPECT_THROW(al.score_pair("x", "y", ScorerKind::LlmAligner), PreconditionError);
}

TEST(LlmAlign, PromptAndSinglePair) {
  auto s = make_stack([](const gateway::ChatRequest&) {
    return std::string("[['Dataset size', 'Number of training examples']]");
  });
  Aligner al(s.gw.get());
  auto ref = table_of("ref", {"Dataset size", "Task"}, {{"10K", "2M"}, {"QA", "NLI"}});
  auto gen = table_of("gen", {"Number of training examples", "Metric"}, {{"10,000", "2 million"}, {"F1", "EM"}});
  std::vector<std::string> warnings;
  auto pairs = al.llm_align(gen, ref, FeaturizerMode::Name, &warnings);
  EXPECT_EQ(pairs, (std::set<AspectPair>{{"Number of training examples", "Dataset size"}}));
  EXPECT_TRUE(warnings.empty());

  auto prompt = s.chat->calls()[0].messages.back().content;
  EXPECT_EQ(prompt.rfind("Given two tables, match column headers if their columns have very similar values.", 0), 0u);
  std::size_t responses = 0, empties = 0;
  for (std::size_t pos = 0; (pos = prompt.find("Response:", pos)) != std::string::npos; ++pos) ++responses;
  for (std::size_t pos = 0; (pos = prompt.find("Response: []", pos)) != std::string::npos; ++pos) ++empties;
  EXPECT_EQ(responses, 11u);  // ten worked examples plus the query
  EXPECT_EQ(empties, 5u);
  EXPECT_NE(prompt.find("Table 1:\n{\"Dataset size\":[\"10K\",\"2M\"],\"Task\":[\"QA\",\"NLI\"]}"), std::string::npos);
  EXPECT_EQ(prompt.substr(prompt.size() - 9), "Response:");
}

TEST(LlmAlign, EmptyInvalidAndReversedPairs) {
  auto ref = schema_table("ref", {"A", "B"});
  auto gen = schema_table("gen", {"C", "D"});
  {
    auto s = make_stack([](const gateway::ChatRequest&) { return std::string("[]"); });
    Aligner al(s.gw.get());
    EXPECT_TRUE(al.llm_align(gen, ref, FeaturizerMode::Name).empty());
  }
  {
    auto s = make_stack([](const gateway::ChatRequest&) { return std::string(R"([["A","Z"],["D","B"],["a","c"]])"); });
    Aligner al(s.gw.get());
    std::vector<std::string> w;
    auto pairs = al.llm_align(gen, ref, FeaturizerMode::Name, &w);
    EXPECT_EQ(pairs, (std::set<AspectPair>{{"D", "B"}, {"C", "A"}}));
    ASSERT_EQ(w.size(), 2u);
    EXPECT_NE(w[0].find("discarded"), std::string::npos);
    EXPECT_NE(w[1].find("reversed"), std::string::npos);
  }
  {
    auto s = make_stack([](const gateway::ChatRequest&) { return std::string("I think A matches C."); });
    Aligner al(s.gw.get());
    EXPECT_THROW(al.llm_align(gen, ref, FeaturizerMode::Name), MalformedJson);
    EXPECT_EQ(s.chat->call_count(), 5u);
  }
}

TEST(Align, SelfAlignmentRecallIsOne) {
  auto t = table_of("t", {"Model", "Dataset", "Accuracy"}, {{"a", "b"}, {"c", "d"}, {"1", "2"}});
  Aligner al(nullptr);
  auto r = al.align(t, t, {FeaturizerMode::Name, ScorerKind::ExactMatch, 0.99});
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.one_to_one.size(), 3u);
  // strict inequality: a perfect score does not clear t = 1
  EXPECT_EQ(al.align(t, t, {FeaturizerMode::Name, ScorerKind::ExactMatch, 1.0}).recall, 0.0);
}

TEST(Align, RecallTwoThirds) {
  auto ref = schema_table("ref", {"A", "B", "C"});
  auto gen = schema_table("gen", {"b", "a", "Z"});
  Aligner al(nullptr);
  auto r = al.align(gen, ref, {FeaturizerMode::Name, ScorerKind::ExactMatch, 0.5});
  EXPECT_NEAR(r.recall, 2.0 / 3.0, 1e-12);
  EXPECT_EQ(r.matched_ref_aspects, (std::set<std::string>{"A", "B"}));
  EXPECT_EQ(r.pair_scores.size(), 9u);
  auto j = r.to_json();
  EXPECT_EQ(j["matched_ref_aspects"], nlohmann::ordered_json({"A", "B"}));
}

TEST(Align, ManyToOneAndGreedyAssignment) {
  auto ref = schema_table("ref", {"dataset size"});
  auto gen = schema_table("gen", {"size of dataset", "dataset"});
  Aligner al(nullptr);
  auto r = al.align(gen, ref, {FeaturizerMode::Name, ScorerKind::Jaccard, 0.4});
  EXPECT_EQ(r.matched_pairs.size(), 2u);
  EXPECT_EQ(r.recall, 1.0);
  ASSERT_EQ(r.one_to_one.size(), 1u);
  EXPECT_EQ(r.one_to_one[0], (AspectPair{"size of dataset", "dataset size"}));
}

TEST(Align, LlmScorerGivesBinaryScores) {
  auto s = make_stack([](const gateway::ChatRequest&) { return std::string(R"([["A","C"]])"); });
  Aligner al(s.gw.get());
  auto r = al.align(schema_table("gen", {"C", "D"}), schema_table("ref", {"A", "B"}),
                    {FeaturizerMode::Name, ScorerKind::LlmAligner, 0.5});
  EXPECT_EQ(r.pair_scores.at({"C", "A"}), 1.0);
  EXPECT_EQ(r.pair_scores.at({"D", "A"}), 0.0);
  EXPECT_EQ(r.recall, 0.5);
}

TEST(Align, Preconditions) {
  Aligner al(nullptr);
  auto t = schema_table("t", {"A", "B"});
  EXPECT_THROW(al.align(t, t, {FeaturizerMode::Name, ScorerKind::ExactMatch, 1.5}), ValidationError);
  EXPECT_THROW(al.align(t, t, {FeaturizerMode::Name, ScorerKind::EmbedCosine, 0.5}), PreconditionError);
  auto bad = schema_table("b", {"A", kReferencesColumn});
  EXPECT_THROW(al.align(t, bad, {FeaturizerMode::Name, ScorerKind::ExactMatch, 0.5}), PreconditionError);
}

TEST(Align, ThresholdMonotonicityWithStubEmbedder) {
  auto s = make_stack();
  Aligner al(s.gw.get());
  const std::vector<std::string> vocab{"dataset", "size", "model", "task", "year", "language", "metric", "domain",
                                       "accuracy", "params", "venue", "method"};
  std::mt19937 rng(50);
  auto random_schema = [&](const std::string& id) {
    std::set<std::string> names;
    std::size_t n = 2 + rng() % 4;
    while (names.size() < n) names.insert(vocab[rng() % vocab.size()] + (rng() % 2 ? " " + vocab[rng() % vocab.size()] : ""));
    return schema_table(id, {names.begin(), names.end()});
  };
  for (int pair = 0; pair < 50; ++pair) {
    auto gen = random_schema("g"), ref = random_schema("r");
    auto base = al.align(gen, ref, {FeaturizerMode::Name, ScorerKind::EmbedCosine, 0.0});
    for (const auto& [p, score] : base.pair_scores) {
      EXPECT_GE(score, 0.0);
      EXPECT_LE(score, 1.0);
    }
    double prev = 2.0;
    for (double t = 0.0; t <= 1.0 + 1e-9; t += 0.05) {
      auto r = rethreshold(base, std::min(t, 1.0));
      EXPECT_LE(r.recall, prev) << "pair " << pair << " t=" << t;
      prev = r.recall;
      if (pair % 10 == 0) {
        auto direct = al.align(gen, ref, {FeaturizerMode::Name, ScorerKind::EmbedCosine, std::min(t, 1.0)});
        EXPECT_EQ(direct.recall, r.recall);
      }
    }
  }
}

TEST(Calibrate, ExactMatchIsFlatAcrossThresholds) {
  Aligner al(nullptr);
  std::vector<TablePair> pairs{{"p", schema_table("g", {"A", "x"}), schema_table("r", {"a", "B"})}};
  CalibrationGrid grid{{FeaturizerMode::Name}, {ScorerKind::ExactMatch}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}};
  auto rep = calibrate(al, pairs, grid);
  ASSERT_EQ(rep.rows.size(), 9u);
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.mean_recall, 0.5);
    EXPECT_EQ(r.ci_low, 0.5);
    EXPECT_EQ(r.ci_high, 0.5);
  }
}

TEST(Calibrate, FourHandScoredPairsMatchResampler) {
  Aligner al(nullptr);
  std::vector<TablePair> pairs{
      {"p1", schema_table("g1", {"A", "B"}), schema_table("r1", {"A", "B"})},
      {"p2", schema_table("g2", {"A", "C"}), schema_table("r2", {"A", "B"})},
      {"p3", schema_table("g3", {"A", "B"}), schema_table("r3", {"A", "B", "C"})},
      {"p4", schema_table("g4", {"Z"}), schema_table("r4", {"X", "Y"})},
  };
  auto want = expected()["calibration_4_pairs"];
  CalibrationGrid grid{{FeaturizerMode::Name}, {ScorerKind::ExactMatch}, {0.5}};
  stats::BootstrapOptions b{.iterations = want["iterations"].get<std::size_t>(), .seed = want["seed"].get<std::uint64_t>()};
  auto rep = calibrate(al, pairs, grid, b);
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_NEAR(rep.rows[0].mean_recall, want["mean"].get<double>(), 1e-12);
  EXPECT_NEAR(rep.rows[0].ci_low, want["ci"][0].get<double>(), 1e-9);
  EXPECT_NEAR(rep.rows[0].ci_high, want["ci"][1].get<double>(), 1e-9);
  EXPECT_NEAR(rep.rows[0].micro_recall, 5.0 / 9.0, 1e-12);
  EXPECT_EQ(rep.to_csv(), calibrate(al, pairs, grid, b).to_csv());
  EXPECT_EQ(rep.to_csv().substr(0, rep.to_csv().find('\n')), "featurizer,scorer,t,mean_recall,ci_low,ci_high");
  EXPECT_NE(rep.to_csv().find("name,exact,0.5,0.541667,"), std::string::npos);
  EXPECT_THROW(calibrate(al, {}, grid), PreconditionError);
}

TEST(Calibrate, EmbedRecallDropsWithThreshold) {
  auto s = make_stack();
  Aligner al(s.gw.get());
  std::vector<TablePair> pairs{{"p", schema_table("g", {"task", "data size", "year"}), schema_table("r", {"goal", "size", "venue"})},
                               {"q", schema_table("g2", {"model", "metric"}), schema_table("r2", {"model", "score"})}};
  CalibrationGrid grid{{FeaturizerMode::Name}, {ScorerKind::EmbedCosine}, {0.5, 0.9}};
  auto rep = calibrate(al, pairs, grid, {.iterations = 100});
  EXPECT_LE(rep.rows[1].mean_recall, rep.rows[0].mean_recall);
}

TEST(Precision, BoundsFromRatings) {
  std::vector<AnnotatedPair> rows;
  for (int i = 0; i < 10; ++i) {
    MatchRating r = i < 7 ? MatchRating::Complete : i < 8 ? MatchRating::Partial : MatchRating::Incorrect;
    rows.push_back({"m" + std::to_string(i), "cfg-1", "g", "r", r});
  }
  rows.push_back({"m10", "cfg-1", "g", "r", std::nullopt});
  auto b = precision_bounds(rows);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_NEAR(*b[0].lower, 0.70, 1e-12);
  EXPECT_NEAR(*b[0].upper, 0.80, 1e-12);
  EXPECT_EQ(b[0].unrated, 1u);
}

TEST(Precision, ExportImportRoundTrip) {
  Aligner al(nullptr);
  auto r1 = al.align(schema_table("g", {"A", "B"}), schema_table("r", {"a", "b", "c"}),
                     {FeaturizerMode::Name, ScorerKind::ExactMatch, 0.5});
  auto r2 = al.align(schema_table("g", {"Zed"}), schema_table("r", {"Q"}), {FeaturizerMode::Name, ScorerKind::Jaccard, 0.3});
  auto ex = export_precision_annotations({{"pair-1", r1}, {"pair-2", r2}}, 11);
  EXPECT_EQ(ex.csv.find("exact"), std::string::npos) << "config label leaked into the CSV";
  auto rows = read_precision_annotations(ex.csv);
  ASSERT_EQ(rows.size(), 2u);
  std::set<AspectPair> back;
  for (const auto& row : rows) {
    const auto& p = ex.key["pairs"][row.pair_id];
    EXPECT_EQ(p["table_pair"], "pair-1");
    back.insert({p["gen"].get<std::string>(), p["ref"].get<std::string>()});
    EXPECT_FALSE(row.rating);
  }
  EXPECT_EQ(back, r1.matched_pairs);
  auto bounds = precision_bounds(rows, ex.key);
  ASSERT_EQ(bounds.size(), 2u);
  for (const auto& b : bounds) EXPECT_FALSE(b.lower) << b.config;  // nothing rated: n/a

  EXPECT_EQ(export_precision_annotations({{"pair-1", r1}}, 11).csv, export_precision_annotations({{"pair-1", r1}}, 11).csv);
  EXPECT_THROW(export_precision_annotations({}), PreconditionError);
  EXPECT_THROW(read_precision_annotations("pair_id,gen_aspect_feature,ref_aspect_feature,config_blind_id,rating\n"
                                          "m1,a,b,cfg,perfect\n"),
               ValidationError);
  EXPECT_THROW(read_precision_annotations("id,rating\n"), ValidationError);
}
