#include <cmath>

#include <gtest/gtest.h>

#include "saber/error.hpp"
#include "saber/scorer.hpp"
#include "test_support.hpp"

namespace {

using namespace saber;

DemoRecord demo(std::string id, std::string task, Vector q, Vector qr) {
  DemoRecord r;
  r.id = std::move(id);
  r.task_tag = std::move(task);
  r.img = {1, 0};
  r.q = std::move(q);
  r.qr = std::move(qr);
  return r;
}

struct HandFixture {
  DemoLibrary lib{2};
  std::vector<QuerySample> queries;
  HandFixture() {
    lib.add(demo("a", "A", {1, 0}, {1, 0}));
    lib.add(demo("b", "B", {0, 1}, {1, 1}));
    lib.add(demo("c", "A", {1, 1}, {0, 1}));
    QuerySample q;
    q.id = "q";
    q.task_tag = "A";
    q.img = {1, 0};
    q.q = {1, 0};
    queries.push_back(q);
  }
};

TEST(Oracle, HandComputedThreeShotValue) {
  HandFixture f;
  OracleScorer s(f.lib, f.queries);
  const double r = 1.0 / std::sqrt(2.0);
  // position 1: 1.1·(1 + 0.5·1); position 2: 1.2·(0 + 0 − 0.5·r);
  // position 3: 1.3·(1 + 0.5·r − 0.5·max(0, r)).
  const double want = 1.1 * 1.5 + 1.2 * (-0.5 * r) + 1.3 * 1.0;
  EXPECT_NEAR(s.score({"q", {"a", "b", "c"}}), want, 1e-12);
  EXPECT_DOUBLE_EQ(s.score({"q", {}}), 0.0);
}

TEST(Oracle, OrderMattersThroughPositionAndRedundancy) {
  HandFixture f;
  OracleScorer s(f.lib, f.queries);
  EXPECT_NE(s.score({"q", {"a", "c"}}), s.score({"q", {"c", "a"}}));
}

TEST(Oracle, RepeatingAnIcdIsPenalized) {
  HandFixture f;
  OracleScorer s(f.lib, f.queries);
  // The copy is fully redundant with the first occurrence.
  const double single = s.score({"q", {"a"}});
  const double twice = s.score({"q", {"a", "a"}});
  EXPECT_NEAR(twice - single, 1.2 * (1.0 + 0.5 - 0.5), 1e-12);
}

TEST(Oracle, WeightsAreConfigurable) {
  HandFixture f;
  OracleConfig cfg;
  cfg.w_match = 0.0;
  cfg.w_sim = 1.0;
  cfg.w_red = 0.0;
  cfg.w_pos = 0.0;
  OracleScorer s(f.lib, f.queries, cfg);
  EXPECT_NEAR(s.score({"q", {"a", "b", "c"}}), 1.0 + 0.0 + 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(Oracle, UnknownIdsAreScorerErrors) {
  HandFixture f;
  OracleScorer s(f.lib, f.queries);
  try {
    s.score({"nope", {"a"}});
    FAIL() << "expected ScorerError";
  } catch (const ScorerError& e) {
    EXPECT_FALSE(e.retriable());
  }
  EXPECT_THROW(s.score({"q", {"zz"}}), ScorerError);
}

TEST(Oracle, MissingVectorsOrTagsAreRejected) {
  HandFixture f;
  DemoRecord bare = demo("d", "A", {1, 0}, {});
  const DemoRecord* icds[] = {&bare};
  EXPECT_THROW(oracle_score(f.queries[0], icds), InvalidArgument);
  QuerySample untagged = f.queries[0];
  untagged.task_tag.clear();
  const DemoRecord* ok[] = {&f.lib.at(0)};
  EXPECT_THROW(oracle_score(untagged, ok), InvalidArgument);
}

TEST(Oracle, ScoreManyMatchesScore) {
  const Store st = saber::testing::random_store(6, 5, 2);
  OracleScorer s(st.library, st.queries);
  const std::vector<ScoreRequest> reqs{{"q000", {"d001"}}, {"q000", {"d002", "d003"}}, {"q000", {}}};
  const auto many = s.score_many(reqs);
  ASSERT_EQ(many.size(), 3u);
  for (std::size_t i = 0; i < reqs.size(); ++i) EXPECT_EQ(many[i], s.score(reqs[i]));
}

}  // namespace
