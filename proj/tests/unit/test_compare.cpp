#include <gtest/gtest.h>

#include "saber/baselines.hpp"
#include "saber/compare.hpp"
#include "saber/error.hpp"
#include "saber/forge.hpp"
#include "saber/inference.hpp"
#include "saber/training.hpp"
#include "test_support.hpp"

namespace {

using namespace saber;

Vector jitter(const Vector& v, std::mt19937_64& rng, double s) {
  std::normal_distribution<double> nd(0.0, s);
  Vector out = v;
  for (auto& x : out) x = static_cast<float>(x + nd(rng));
  return out;
}

// One demo ("dom") shares the queries' task and nearly their vectors; the
// rest belong to another task.
Store dominance_deck() {
  Store s = saber::testing::random_store(10, 8, 42, 1, 0);
  std::mt19937_64 rng(7);
  const Vector u = saber::testing::random_unit(rng, 8);
  const Vector v = saber::testing::random_unit(rng, 8);
  DemoLibrary lib(8);
  for (auto r : s.library) {
    r.task_tag = "other";
    lib.add(r);
  }
  DemoRecord dom = lib.at(0);
  dom.id = "dom";
  dom.task_tag = "main";
  dom.img = u;
  dom.q = v;
  dom.r = jitter(v, rng, 0.2);
  lib.add(dom);
  s.library = std::move(lib);
  for (int i = 0; i < 6; ++i) {
    QuerySample q;
    q.id = "q" + std::to_string(i);
    q.task_tag = "main";
    q.img = jitter(u, rng, 0.1);
    q.q = jitter(v, rng, 0.1);
    q.pseudo_r = dom.r;
    s.queries.push_back(q);
  }
  return s;
}

std::vector<compare::Method> similarity_methods(const DemoLibrary& lib, int n) {
  using baselines::Strategy;
  return {
      {"I2I", [&lib, n](const QuerySample& q) { return baselines::retrieve_i2i(q, lib, n); }},
      {"IQ2IQ-AMS",
       [&lib, n](const QuerySample& q) { return baselines::retrieve_iq2iq(q, lib, n, Strategy::ams); }},
      {"IQ2IQ-JES",
       [&lib, n](const QuerySample& q) { return baselines::retrieve_iq2iq(q, lib, n, Strategy::jes); }},
      {"IQPR", [&lib, n](const QuerySample& q) { return baselines::retrieve_iqpr(q, lib, n); }},
  };
}

TEST(Compare, DominantDemoIsRankedFirstBySimilarityMethods) {
  const Store s = dominance_deck();
  OracleScorer scorer(s.library, s.queries);
  const auto report = compare::compare_methods(s.queries, similarity_methods(s.library, 3),
                                               scorer, 1, 0);
  ASSERT_EQ(report.methods.size(), 4u);
  for (const auto& m : report.methods) {
    ASSERT_FALSE(m.error) << m.name << ": " << *m.error;
    for (const auto& seq : m.sequences) EXPECT_EQ(seq.icd_ids.front(), "dom") << m.name;
  }
}

TEST(Compare, TrainedModelPicksTheDominantDemo) {
  const Store s = dominance_deck();
  OracleScorer scorer(s.library, s.queries);
  forge::ForgeConfig fc;
  fc.shots = 2;
  fc.cand = 11;
  const std::vector<QuerySample> train(s.queries.begin(), s.queries.begin() + 5);
  const Dataset ds = forge::build_dataset(s.library, train, scorer, fc);
  for (const auto& seq : ds.sequences) {
    EXPECT_NE(std::find(seq.icd_ids.begin(), seq.icd_ids.end(), "dom"), seq.icd_ids.end());
  }

  model::ModelConfig mc;
  mc.d = 8;
  mc.n_heads = 2;
  mc.init_std = 0.1;
  model::Model m(mc, s.library.size(), 3);
  training::TrainConfig tc;
  tc.lr = 1e-2;
  tc.batch = 8;
  tc.epochs = 40;
  tc.t0 = 1000.0;
  training::fit(m, ds, s.library, s.queries, *s.instruction, tc, {});

  inference::GenConfig gc;
  gc.n = 2;
  const auto mats = fusion::LibraryMatrices::from(s.library);
  const auto got = inference::generate_sequence(m, s.library, mats, s.queries[5],
                                                *s.instruction, gc);
  EXPECT_NE(std::find(got.icd_ids.begin(), got.icd_ids.end(), "dom"), got.icd_ids.end());
}

TEST(Compare, ReportValuesMatchDirectComputation) {
  const Store s = saber::testing::random_store(9, 6, 4, 2, 4);
  OracleScorer scorer(s.library, s.queries);
  const auto report =
      compare::compare_methods(s.queries, similarity_methods(s.library, 3), scorer, 1, 0);
  EXPECT_EQ(report.n, 3);
  const auto* i2i = report.find("I2I");
  ASSERT_NE(i2i, nullptr);
  double mean = 0.0;
  for (int i = 0; i < 4; ++i) {
    const auto& q = s.queries[static_cast<std::size_t>(i)];
    EXPECT_EQ(i2i->sequences[static_cast<std::size_t>(i)].query_id, q.id);
    mean += scorer.score({q.id, baselines::retrieve_i2i(q, s.library, 3)});
  }
  EXPECT_NEAR(i2i->mean, mean / 4.0, 1e-12);
  EXPECT_EQ(report.find("nope"), nullptr);
}

TEST(Compare, FailingMethodIsMarkedAndOthersStillRun) {
  const Store s = saber::testing::random_store(5, 4, 4);
  OracleScorer scorer(s.library, s.queries);
  std::vector<compare::Method> methods{
      {"broken", [](const QuerySample&) -> std::vector<std::string> {
         throw InvalidArgument("no luck");
       }},
      {"I2I", [&](const QuerySample& q) { return baselines::retrieve_i2i(q, s.library, 2); }}};
  const auto report = compare::compare_methods(s.queries, methods, scorer, 1, 0);
  ASSERT_TRUE(report.methods[0].error);
  EXPECT_EQ(*report.methods[0].error, "no luck");
  EXPECT_FALSE(report.methods[1].error);

  const auto j = compare::report_to_json(report);
  EXPECT_EQ(j.at("format"), "saber-report/v1");
  EXPECT_EQ(j.at("n"), 2);
  ASSERT_EQ(j.at("methods").size(), 2u);
  EXPECT_EQ(j.at("methods")[0].at("error"), "no luck");
  for (const auto& m : j.at("methods")) {
    for (const char* key : {"name", "mean", "gap", "variance"}) EXPECT_TRUE(m.contains(key));
  }
  EXPECT_FALSE(j.at("methods")[1].contains("error"));

  const auto text = compare::report_to_text(report);
  EXPECT_EQ(text.rfind("method", 0), 0u);
  EXPECT_NE(text.find("broken  error: no luck"), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}

TEST(Compare, EmptyQuerySetIsRejected) {
  const Store s = saber::testing::random_store(5, 4, 4);
  OracleScorer scorer(s.library, s.queries);
  EXPECT_THROW(compare::compare_methods({}, {}, scorer, 1, 0), InvalidArgument);
}

}  // namespace
