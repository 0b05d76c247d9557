#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "digesttab/corpus/corpus_store.hpp"
#include "digesttab/gateway/stub_providers.hpp"
#include "test_util.hpp"

using namespace digesttab;
using namespace digesttab::corpus;

namespace {

ReviewTable grid(const std::string& id, std::size_t rows, std::size_t cols) {
  ReviewTable t;
  t.table_id = id;
  for (std::size_t r = 0; r < rows; ++r) t.row_keys.push_back(id + "_r" + std::to_string(r));
  for (std::size_t c = 0; c < cols; ++c) t.aspects.push_back("A" + std::to_string(c));
  for (auto& r : t.row_keys) {
    for (auto& a : t.aspects) t.set_cell(r, a, CellValue::of(r + a));
    t.papers.push_back(PaperRecord{r, std::nullopt, "T " + r, std::nullopt, std::nullopt});
  }
  return t;
}

std::vector<CellValue> cells(std::initializer_list<const char*> xs) {
  std::vector<CellValue> out;
  for (auto x : xs) out.push_back(CellValue::of(x));
  return out;
}

gateway::Gateway table_gateway(std::vector<std::pair<std::string, gateway::Vector>> table) {
  gateway::GatewayOptions o;
  o.embed_provider_name = "table";
  o.embed_model_id = "m";
  return gateway::Gateway(o, nullptr, std::make_shared<gateway::TableEmbedder>(std::move(table)));
}

}  // namespace

TEST(CorpusStats, SingleTable) {
  auto s = compute_stats({grid("t", 3, 3)});
  EXPECT_EQ(s.n_tables, 1u);
  EXPECT_EQ(s.rows.min, 3u);
  EXPECT_EQ(s.rows.max, 3u);
  EXPECT_DOUBLE_EQ(s.rows.median, 3.0);
  EXPECT_DOUBLE_EQ(s.rows.mean, 3.0);
  EXPECT_EQ(s.rows.total, 3u);
  EXPECT_EQ(s.n_unique_papers, 3u);
}

TEST(CorpusStats, EvenCountMedianIsMidpoint) {
  auto s = compute_stats({grid("a", 2, 2), grid("b", 4, 2)});
  EXPECT_DOUBLE_EQ(s.rows.median, 3.0);
  EXPECT_EQ(s.rows.total, 6u);
  EXPECT_DOUBLE_EQ(s.aspects.mean, 2.0);
}

TEST(CorpusStats, EmptyCorpusThrows) { EXPECT_THROW(compute_stats({}), EmptyCorpus); }

TEST(CorpusStats, OrderInvariant) {
  std::mt19937_64 rng(3);
  std::vector<ReviewTable> c;
  for (int i = 0; i < 30; ++i) c.push_back(grid("t" + std::to_string(i), 1 + rng() % 7, 2 + rng() % 5));
  auto a = compute_stats(c);
  std::shuffle(c.begin(), c.end(), rng);
  auto b = compute_stats(c);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.to_text(), b.to_text());
}

TEST(CorpusStats, UniquePapersUseExternalId) {
  auto a = grid("a", 2, 2), b = grid("b", 2, 2);
  a.papers[0].external_id = "S2:1";
  b.papers[1].external_id = "S2:1";
  EXPECT_EQ(compute_stats({a, b}).n_unique_papers, 3u);
}

TEST(CorpusStats, DistributionSumsToOneAndSkipsEmptyColumns) {
  auto t = grid("t", 3, 3);
  for (auto& r : t.row_keys) t.set_cell(r, "A2", CellValue::blank());
  auto s = compute_stats({t});
  EXPECT_EQ(s.all_empty_columns, 1u);
  double sum = 0;
  for (auto& [k, v] : s.aspect_type_distribution) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  std::size_t attributed = 0;
  for (auto& [k, v] : s.rule_attribution) attributed += v;
  EXPECT_EQ(attributed, 2u);
}

TEST(CorpusStats, NotesFlagReferenceTotal) {
  auto s = compute_stats({grid("t", 2, 2)});
  ASSERT_FALSE(s.notes.empty());
  EXPECT_NE(s.notes[0].find("11,016"), std::string::npos);
  EXPECT_NE(s.notes[0].find("11,0016"), std::string::npos);
}

TEST(Classify, Examples) {
  EXPECT_EQ(classify_aspect(cells({"✓", "✗", "✓"})), AspectType::Boolean);
  EXPECT_EQ(classify_aspect(cells({"Yes", "no", "-"})), AspectType::Boolean);
  EXPECT_EQ(classify_aspect(cells({"10,000", "250"})), AspectType::Numeric);
  EXPECT_EQ(classify_aspect(cells({"300K", "1.2M", "45%", "-"})), AspectType::Numeric);
  EXPECT_EQ(classify_aspect(cells({"$5", "10-20", "~3h"})), AspectType::Numeric);
  EXPECT_EQ(classify_aspect(cells({"uses a transformer encoder to rank candidate passages",
                                   "relies on hand built features and a linear model"})),
            AspectType::Text);
  EXPECT_EQ(classify_aspect(cells({"CNN/Daily Mail", "Reddit"})), AspectType::Entity);
  EXPECT_EQ(classify_aspect(cells({"News", "News", "Dialogue"})), AspectType::Category);
}

TEST(Classify, DashesAloneAreNotBoolean) {
  EXPECT_NE(classify_aspect(cells({"-", "-"})), AspectType::Boolean);
  EXPECT_NE(classify_aspect(cells({"-", "-"})), AspectType::Numeric);
}

TEST(Classify, EmptyCellsIgnoredAllEmptyRejected) {
  std::vector<CellValue> v = cells({"yes", "no"});
  v.push_back(CellValue::blank());
  EXPECT_EQ(classify_aspect(v), AspectType::Boolean);
  EXPECT_THROW(classify_aspect({CellValue::blank(), CellValue::blank()}), PreconditionError);
}

TEST(Classify, RepeatRequirementIsConfigurable) {
  auto v = cells({"News", "Dialogue", "Code"});
  EXPECT_EQ(classify_aspect_detailed(v).rule, "entity-fallback");
  ClassifierConfig c;
  c.category_requires_repeat = false;
  EXPECT_EQ(classify_aspect_detailed(v, c).rule, "category-closed-set");
}

TEST(Classify, TypeIsOrderInvariant) {
  auto v = cells({"News", "News", "Dialogue", "Code", "Code"});
  auto expect = classify_aspect(v);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(v.begin(), v.end(), rng);
    EXPECT_EQ(classify_aspect(v), expect);
  }
}

TEST(CaptionIndex, HandComputedRanking) {
  // unit vectors: q=(1,0,0); a parallel, b at 45 degrees, c orthogonal, d antiparallel
  auto gw = table_gateway({{"q", {1, 0, 0}},
                           {"cap a", {2, 0, 0}},
                           {"cap b", {1, 1, 0}},
                           {"cap c", {0, 0, 3}},
                           {"cap d", {-1, 0, 0}}});
  std::vector<ReviewTable> corpus;
  for (std::string id : {"a", "b", "c", "d"}) {
    auto t = grid(id, 2, 2);
    t.caption = "cap " + id;
    corpus.push_back(t);
  }
  corpus.push_back(grid("nocap", 2, 2));
  auto idx = CaptionIndex::build(corpus, gw);
  EXPECT_EQ(idx.size(), 4u);
  auto hits = idx.nearest("q", 3, gw);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].first, "a");
  EXPECT_NEAR(hits[0].second, 1.0, 1e-9);
  EXPECT_EQ(hits[1].first, "b");
  EXPECT_NEAR(hits[1].second, 1.0 / std::sqrt(2.0), 1e-7);
  EXPECT_EQ(hits[2].first, "c");
  EXPECT_NEAR(hits[2].second, 0.0, 1e-9);

  auto excl = idx.nearest("q", 10, gw, std::string("a"));
  ASSERT_EQ(excl.size(), 3u);
  EXPECT_EQ(excl[0].first, "b");
  EXPECT_NEAR(excl[2].second, -1.0, 1e-9);
}

TEST(CaptionIndex, TiesBreakByTableId) {
  auto gw = table_gateway({{"q", {1, 0}}, {"x", {0, 1}}});
  std::vector<ReviewTable> corpus;
  for (std::string id : {"z", "m", "b"}) {
    auto t = grid(id, 2, 2);
    t.caption = "x";
    corpus.push_back(t);
  }
  auto hits = CaptionIndex::build(corpus, gw).nearest("q", 3, gw);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].first, "b");
  EXPECT_EQ(hits[1].first, "m");
  EXPECT_EQ(hits[2].first, "z");
}

TEST(CaptionIndex, PreconditionsAndUnavailable) {
  auto gw = table_gateway({{"q", {1, 0}}});
  CaptionIndex empty;
  EXPECT_THROW(empty.nearest("q", 0, gw), PreconditionError);
  EXPECT_THROW(empty.nearest(" ", 1, gw), PreconditionError);
  EXPECT_THROW(empty.nearest("unknown text", 1, gw), gateway::EmbedderUnavailable);

  gateway::GatewayOptions o;
  o.embed_model_id = "m";
  gateway::Gateway none(o, nullptr, nullptr);
  EXPECT_THROW(empty.nearest("q", 1, none), gateway::EmbedderUnavailable);
}

TEST(CaptionIndex, SaveLoadAndModelMismatch) {
  auto gw = table_gateway({{"q", {1, 0}}, {"c1", {3, 4}}});
  auto t = grid("t", 2, 2);
  t.caption = "c1";
  auto idx = CaptionIndex::build({t}, gw);
  testkit::TempDir dir;
  idx.save(dir / "idx.json");
  auto back = CaptionIndex::load(dir / "idx.json", "m");
  ASSERT_TRUE(back);
  EXPECT_EQ(back->dim(), 2u);
  auto hits = back->nearest("q", 1, gw);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_NEAR(hits[0].second, 0.6, 1e-7);
  EXPECT_FALSE(CaptionIndex::load(dir / "idx.json", "other"));
  EXPECT_FALSE(CaptionIndex::load(dir / "missing.json", "m"));
}

TEST(CorpusMini, MatchesScriptedExpectations) {
  auto corpus = load_corpus(testkit::fixtures() / "corpus_mini" / "corpus.jsonl");
  auto expected = ojson::parse(read_file(testkit::fixtures() / "corpus_mini" / "expected_stats.json"));
  auto s = compute_stats(corpus);
  auto j = s.to_json();
  EXPECT_EQ(j["n_tables"], expected["n_tables"]);
  EXPECT_EQ(j["n_unique_papers"], expected["n_unique_papers"]);
  for (const char* k : {"rows", "aspects"}) {
    for (const char* f : {"min", "max", "total"}) EXPECT_EQ(j[k][f], expected[k][f]) << k << "." << f;
    EXPECT_DOUBLE_EQ(j[k]["median"].get<double>(), expected[k]["median"].get<double>());
    EXPECT_DOUBLE_EQ(j[k]["mean"].get<double>(), expected[k]["mean"].get<double>());
  }
  // column types are fixed by construction in the generator
  EXPECT_EQ(j["aspect_type_counts"], expected["aspect_type_counts"]);
}
