#include <gtest/gtest.h>

#include "saber/error.hpp"
#include "saber/fusion.hpp"
#include "saber/gradcheck.hpp"
#include "test_support.hpp"

namespace {

using namespace saber;
using ad::Mat;
using ad::Tape;
using ad::Var;

Mat row(std::initializer_list<double> v) {
  Mat m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

TEST(BinaryGate, ZeroWeightsAverageTheTwoSides) {
  Tape t;
  Var out = fusion::binary_gate(t.constant(row({1, 2})), t.constant(row({3, -2})),
                                t.constant(Mat::Zero(1, 4)), t.constant(Mat::Zero(1, 1)));
  EXPECT_DOUBLE_EQ(out.value()(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(out.value()(0, 1), 0.0);
}

TEST(BinaryGate, ScalarGateHandValue) {
  Tape t;
  // g = σ(1·1 + 0·2 + 0.5·3 + 0·(−2) − 0.5) = σ(2)
  Var out = fusion::binary_gate(t.constant(row({1, 2})), t.constant(row({3, -2})),
                                t.constant(row({1, 0, 0.5, 0})), t.constant(row({-0.5})));
  const double g = 1.0 / (1.0 + std::exp(-2.0));
  EXPECT_NEAR(out.value()(0, 0), g * 1 + (1 - g) * 3, 1e-15);
  EXPECT_NEAR(out.value()(0, 1), g * 2 + (1 - g) * -2, 1e-15);
}

TEST(BinaryGate, ElementwiseGateActsPerDimension) {
  Tape t;
  Mat w = Mat::Zero(2, 4);
  Mat b = row({40.0, -40.0});  // first dimension takes img, second takes txt
  Var out = fusion::binary_gate(t.constant(row({1, 2})), t.constant(row({3, -2})),
                                t.constant(w), t.constant(b));
  EXPECT_NEAR(out.value()(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(out.value()(0, 1), -2.0, 1e-12);
}

TEST(TernaryGate, ZeroWeightsGiveThirds) {
  Tape t;
  auto out = fusion::ternary_gate(t.constant(row({3, 0})), t.constant(row({0, 3})),
                                  t.constant(row({3, 3})), t.constant(Mat::Zero(3, 6)),
                                  t.constant(Mat::Zero(1, 3)));
  EXPECT_NEAR(out.embedding.value()(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(out.embedding.value()(0, 1), 2.0, 1e-15);
  EXPECT_NEAR(out.regularizer.value()(0, 0), 1.0 / 3.0, 1e-15);
}

TEST(TernaryGate, GatesAreADistributionAndRegularizerBounded) {
  std::mt19937_64 rng(5);
  Tape t;
  auto out = fusion::ternary_gate(
      t.constant(normal_matrix(rng, 6, 4, 1.0)), t.constant(normal_matrix(rng, 6, 4, 1.0)),
      t.constant(normal_matrix(rng, 6, 4, 1.0)), t.constant(normal_matrix(rng, 3, 12, 2.0)),
      t.constant(normal_matrix(rng, 1, 3, 1.0)));
  const Mat& g = out.gates.value();
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    EXPECT_NEAR(g.row(i).sum(), 1.0, 1e-12);
    EXPECT_TRUE((g.row(i).array() > 0.0).all());
    const double reg = out.regularizer.value()(i, 0);
    EXPECT_NEAR(reg, g.row(i).squaredNorm(), 1e-12);
    EXPECT_GE(reg, 1.0 / 3.0 - 1e-12);
    EXPECT_LE(reg, 1.0);
  }
}

TEST(TernaryGate, PenaltyIsMeanExcessOverTheta) {
  Tape t;
  Mat reg(3, 1);
  reg << 0.95, 0.5, 1.0;
  Var p = fusion::ternary_penalty(t.constant(reg), 0.9);
  EXPECT_NEAR(p.scalar(), (0.05 + 0.0 + 0.1) / 3.0, 1e-15);
}

TEST(Fusion, ConcatJoinAndGuiderHandValues) {
  Tape t;
  Var c = fusion::concat_embed(t.constant(row({1, 0})), t.constant(row({0, 1})),
                               t.constant(row({2, 2})), t.constant(row({-1, 0.5})));
  EXPECT_DOUBLE_EQ(c.value()(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(c.value()(0, 1), 3.5);

  Mat join = Mat::Zero(2, 4);
  join.rightCols(2) = Mat::Identity(2, 2);
  Var j = fusion::join_query(t.constant(row({9, 9})), t.constant(row({1.5, -1})),
                             t.constant(join));
  EXPECT_DOUBLE_EQ(j.value()(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(j.value()(0, 1), -1.0);

  Mat w(1, 3);
  w << 1, 2, 3;
  Var g = fusion::task_guider(t.constant(row({1})), t.constant(row({10})),
                              t.constant(row({100})), t.constant(w));
  EXPECT_DOUBLE_EQ(g.value()(0, 0), 321.0);
}

TEST(Fusion, ModeNamesRoundTrip) {
  for (auto m : {fusion::Mode::binary, fusion::Mode::ternary, fusion::Mode::concat}) {
    EXPECT_EQ(fusion::parse_mode(fusion::to_string(m)), m);
  }
  EXPECT_THROW(fusion::parse_mode("quaternary"), ConfigError);
}

class TableConsistency : public ::testing::TestWithParam<fusion::Mode> {};

TEST_P(TableConsistency, GatheredTableRowsMatchPerRecordGating) {
  const Store store = saber::testing::random_store(5, 6, 11);
  fusion::FusionConfig cfg;
  cfg.mode = GetParam();
  ParamSet params;
  std::mt19937_64 rng(3);
  fusion::add_params(params, cfg, 6, store.library.size(), rng);
  // Move every weight off zero so the gates are not symmetric.
  for (auto& p : params) p.value += normal_matrix(rng, p.value.rows(), p.value.cols(), 0.3);

  Tape t;
  const auto mats = fusion::LibraryMatrices::from(store.library);
  Var table = fusion::demo_table(t, params, cfg, mats);
  Var e_hat = fusion::embed_query(t, params, cfg, store.queries[0]);
  const int icds[] = {3, 0, 4};
  auto a = fusion::assemble_sequence(t, params, e_hat, table, icds, true);
  const std::vector<std::string> ids{"d003", "d000", "d004"};
  auto b = fusion::build_input_sequence(t, params, cfg, store.queries[0], store.library, ids,
                                        true);
  EXPECT_EQ(a.embeddings.rows(), 6);
  EXPECT_EQ(a.icd_positions, (std::vector<int>{2, 3, 4}));
  EXPECT_EQ(b.icd_positions, a.icd_positions);
  EXPECT_TRUE(a.has_eos);
  EXPECT_LT((a.embeddings.value() - b.embeddings.value()).cwiseAbs().maxCoeff(), 1e-14);
}

INSTANTIATE_TEST_SUITE_P(Modes, TableConsistency,
                         ::testing::Values(fusion::Mode::binary, fusion::Mode::ternary,
                                           fusion::Mode::concat),
                         [](const auto& info) { return fusion::to_string(info.param); });

TEST(Fusion, EmptyPrefixHasOnlyBosAndQuery) {
  const Store store = saber::testing::random_store(3, 4, 2);
  fusion::FusionConfig cfg;
  ParamSet params;
  std::mt19937_64 rng(1);
  fusion::add_params(params, cfg, 4, 3, rng);
  Tape t;
  Var table = fusion::demo_table(t, params, cfg, fusion::LibraryMatrices::from(store.library));
  auto seq = fusion::assemble_sequence(t, params, fusion::embed_query(t, params, cfg,
                                                                      store.queries[0]),
                                       table, {}, false);
  EXPECT_EQ(seq.embeddings.rows(), 2);
  EXPECT_TRUE(seq.icd_positions.empty());
}

TEST(Fusion, MissingVectorsAreRejected) {
  Store store = saber::testing::random_store(3, 4, 2);
  fusion::FusionConfig cfg;
  ParamSet params;
  std::mt19937_64 rng(1);
  fusion::add_params(params, cfg, 4, 3, rng);

  DemoLibrary lib(4);
  for (const auto& r : store.library) {
    DemoRecord copy = r;
    if (copy.id == "d001") copy.qr.clear();
    lib.add(copy);
  }
  Tape t;
  EXPECT_THROW(fusion::demo_table(t, params, cfg, fusion::LibraryMatrices::from(lib)),
               InvalidArgument);
  const std::vector<std::string> ids{"d001"};
  EXPECT_THROW(fusion::build_input_sequence(t, params, cfg, store.queries[0], lib, ids, false),
               InvalidArgument);
  const std::vector<std::string> unknown{"zzz"};
  EXPECT_THROW(fusion::build_input_sequence(t, params, cfg, store.queries[0], store.library,
                                            unknown, false),
               InvalidArgument);

  EXPECT_THROW(fusion::init_task_guider(t, params, store.queries[0], nullptr), InvalidArgument);
  InstructionRecord empty;
  EXPECT_THROW(fusion::init_task_guider(t, params, store.queries[0], &empty), InvalidArgument);
  QuerySample q = store.queries[0];
  q.q.clear();
  EXPECT_THROW(fusion::embed_query(t, params, cfg, q), InvalidArgument);
}

TEST(Fusion, GateGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(9);
  const Mat img = normal_matrix(rng, 4, 3, 1.0);
  const Mat q = normal_matrix(rng, 4, 3, 1.0);
  const Mat r = normal_matrix(rng, 4, 3, 1.0);
  const Mat proj = normal_matrix(rng, 4, 3, 1.0);
  ParamSet ps;
  ps.add("gw", normal_matrix(rng, 3, 6, 0.5));
  ps.add("gb", normal_matrix(rng, 1, 3, 0.5));
  ps.add("tw", normal_matrix(rng, 3, 9, 0.5));
  ps.add("tb", normal_matrix(rng, 1, 3, 0.5));
  auto loss = [&](Tape& t) {
    Var b = fusion::binary_gate(t.constant(img), t.constant(q), t.param(ps.get("gw")),
                                t.param(ps.get("gb")));
    auto tern = fusion::ternary_gate(t.constant(img), t.constant(q), t.constant(r),
                                     t.param(ps.get("tw")), t.param(ps.get("tb")));
    Var s = ad::sum(ad::hadamard(ad::add(b, tern.embedding), t.constant(proj)));
    return ad::add(s, fusion::ternary_penalty(tern.regularizer, 0.4));
  };
  EXPECT_LT(grad_check(loss, ps).max_rel_err, 1e-4);
}

}  // namespace
