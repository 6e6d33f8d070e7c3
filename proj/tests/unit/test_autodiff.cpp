#include <cmath>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "saber/autodiff.hpp"
#include "saber/error.hpp"
#include "saber/gradcheck.hpp"
#include "saber/params.hpp"

namespace {

using namespace saber;
using ad::Mat;
using ad::Tape;
using ad::Var;

// Reduces any matrix output to a scalar through a fixed random projection so
// every output entry contributes to the gradient.
Var project(Tape& t, const Var& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Mat w = normal_matrix(rng, out.rows(), out.cols(), 1.0);
  return ad::sum(ad::hadamard(out, t.constant(w)));
}

struct OpCase {
  const char* name;
  std::function<Var(Tape&, Var, Var)> fn;  // a: 3×4, b: 3×4 unless reshaped
};

class ElementwiseGrad : public ::testing::TestWithParam<OpCase> {};

TEST_P(ElementwiseGrad, MatchesCentralDifferences) {
  std::mt19937_64 rng(11);
  ParamSet ps;
  ps.add("a", normal_matrix(rng, 3, 4, 0.8));
  // Keep b positive and away from clamp boundaries for log/clamp cases.
  ps.add("b", normal_matrix(rng, 3, 4, 0.3).array().abs() + 0.5);
  const auto& op = GetParam();
  auto loss = [&](Tape& t) {
    return project(t, op.fn(t, t.param(ps.get("a")), t.param(ps.get("b"))), 5);
  };
  GradCheckOptions opts;
  opts.samples = 24;
  const auto r = grad_check(loss, ps, opts);
  EXPECT_LT(r.max_rel_err, 1e-4) << op.name << " worst " << r.worst;
}

const Mat kRow = (Mat(1, 4) << 0.3, -0.2, 0.5, 1.1).finished();
const Mat kCol = (Mat(3, 1) << 0.7, -1.3, 0.4).finished();

INSTANTIATE_TEST_SUITE_P(
    Ops, ElementwiseGrad,
    ::testing::Values(
        OpCase{"matmul", [](Tape&, Var a, Var b) { return ad::matmul(a, ad::transpose(b)); }},
        OpCase{"matmul_nt", [](Tape&, Var a, Var b) { return ad::matmul_nt(a, b); }},
        OpCase{"add", [](Tape&, Var a, Var b) { return ad::add(a, b); }},
        OpCase{"sub", [](Tape&, Var a, Var b) { return ad::sub(a, b); }},
        OpCase{"hadamard", [](Tape&, Var a, Var b) { return ad::hadamard(a, b); }},
        OpCase{"scale", [](Tape&, Var a, Var) { return ad::scale(a, -1.7); }},
        OpCase{"scale_by",
               [](Tape&, Var a, Var b) { return ad::scale_by(a, ad::slice(b, 1, 1, 2, 1)); }},
        OpCase{"affine", [](Tape&, Var a, Var) { return ad::affine(a, 2.5, -0.25); }},
        OpCase{"add_row", [](Tape&, Var a, Var b) { return ad::add_row(a, ad::row(b, 2)); }},
        OpCase{"mul_col",
               [](Tape&, Var a, Var b) { return ad::mul_col(a, ad::slice(b, 0, 3, 1, 1)); }},
        OpCase{"sigmoid", [](Tape&, Var a, Var) { return ad::sigmoid(a); }},
        OpCase{"gelu", [](Tape&, Var a, Var) { return ad::gelu(a); }},
        OpCase{"log", [](Tape&, Var, Var b) { return ad::log(b); }},
        OpCase{"clamp", [](Tape&, Var, Var b) { return ad::clamp(b, 0.0, 10.0); }},
        OpCase{"concat_cols",
               [](Tape&, Var a, Var b) {
                 const Var parts[] = {a, b};
                 return ad::concat_cols(parts);
               }},
        OpCase{"concat_rows",
               [](Tape&, Var a, Var b) {
                 const Var parts[] = {b, a};
                 return ad::concat_rows(parts);
               }},
        OpCase{"gather_rows",
               [](Tape&, Var a, Var) {
                 const int idx[] = {2, 0, 2};
                 return ad::gather_rows(a, idx);
               }},
        OpCase{"repeat_rows", [](Tape&, Var a, Var) { return ad::repeat_rows(ad::row(a, 1), 3); }},
        OpCase{"mean", [](Tape&, Var a, Var) { return ad::mean(a); }},
        OpCase{"sum_squares", [](Tape&, Var a, Var) { return ad::sum_squares(a); }},
        OpCase{"layer_norm",
               [](Tape& t, Var a, Var) {
                 return ad::layer_norm(a, t.constant(kRow), t.constant(kRow * 0.5));
               }},
        OpCase{"layer_norm_params",
               [](Tape&, Var a, Var b) {
                 return ad::layer_norm(a, ad::row(b, 0), ad::row(b, 1));
               }},
        OpCase{"normalize_rows", [](Tape&, Var a, Var) { return ad::normalize_rows(a); }},
        OpCase{"softmax_rows", [](Tape&, Var a, Var) { return ad::softmax_rows(a); }},
        OpCase{"cross_entropy",
               [](Tape&, Var a, Var) {
                 const int targets[] = {3, 0, 1};
                 return ad::cross_entropy(a, targets);
               }},
        OpCase{"kl_to_uniform_rows",
               [](Tape&, Var a, Var) {
                 ad::BoolMat support = ad::BoolMat::Constant(3, 4, true);
                 support(0, 3) = false;
                 support(2, 0) = false;
                 support(2, 1) = false;
                 return ad::kl_to_uniform_rows(a, support);
               }},
        OpCase{"attention_masked",
               [](Tape&, Var a, Var b) {
                 // 3 positions, d=4, 2 heads; b doubles as an additive mask.
                 ad::BoolMat allowed = ad::BoolMat::Constant(3, 3, true);
                 allowed(0, 1) = false;
                 allowed(0, 2) = false;
                 allowed(1, 2) = false;
                 Var m = ad::slice(b, 0, 3, 0, 3);
                 return ad::attention(a, ad::scale(a, 0.7), ad::hadamard(a, b), m, allowed, 2,
                                      "test");
               }}),
    [](const ::testing::TestParamInfo<OpCase>& info) { return std::string(info.param.name); });

TEST(Autodiff, SoftmaxRowsSumToOne) {
  Tape t;
  std::mt19937_64 rng(3);
  Var s = ad::softmax_rows(t.constant(normal_matrix(rng, 5, 7, 4.0)));
  for (Eigen::Index r = 0; r < 5; ++r) EXPECT_NEAR(s.value().row(r).sum(), 1.0, 1e-12);
}

TEST(Autodiff, LayerNormHandValues) {
  Tape t;
  Mat x(1, 4);
  x << 1, 2, 3, 4;
  Var y = ad::layer_norm(t.constant(x), t.constant(Mat::Ones(1, 4)), t.constant(Mat::Zero(1, 4)),
                         0.0);
  // mean 2.5, population variance 1.25
  const double s = std::sqrt(1.25);
  EXPECT_NEAR(y.value()(0, 0), -1.5 / s, 1e-12);
  EXPECT_NEAR(y.value()(0, 3), 1.5 / s, 1e-12);
}

TEST(Autodiff, CrossEntropyHandValue) {
  Tape t;
  Mat logits(1, 3);
  logits << 1.0, 2.0, 3.0;
  const int target[] = {2};
  Var ce = ad::cross_entropy(t.constant(logits), target);
  const double lse = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  EXPECT_NEAR(ce.scalar(), lse - 3.0, 1e-12);
}

TEST(Autodiff, SinglePositionAttentionReturnsValueRow) {
  Tape t;
  Mat v(1, 4);
  v << 0.1, -0.2, 0.3, 0.4;
  Var q = t.constant(Mat::Random(1, 4));
  Var out = ad::attention(q, q, t.constant(v), Var{}, ad::BoolMat::Constant(1, 1, true), 2, "one");
  EXPECT_LT((out.value() - v).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Autodiff, AttentionMatchesDirectFormulaWithoutMask) {
  // Single head, no mask: softmax(QKᵀ/√d)V computed independently.
  std::mt19937_64 rng(8);
  Mat q = normal_matrix(rng, 3, 2, 1.0), k = normal_matrix(rng, 3, 2, 1.0),
      v = normal_matrix(rng, 3, 2, 1.0);
  Tape t;
  Var out = ad::attention(t.constant(q), t.constant(k), t.constant(v), Var{},
                          ad::BoolMat::Constant(3, 3, true), 1, "ref");
  for (int i = 0; i < 3; ++i) {
    double w[3], z = 0.0;
    for (int j = 0; j < 3; ++j) {
      w[j] = std::exp((q(i, 0) * k(j, 0) + q(i, 1) * k(j, 1)) / std::sqrt(2.0));
      z += w[j];
    }
    for (int c = 0; c < 2; ++c) {
      double expect = 0.0;
      for (int j = 0; j < 3; ++j) expect += w[j] / z * v(j, c);
      EXPECT_NEAR(out.value()(i, c), expect, 1e-12);
    }
  }
}

TEST(Autodiff, AttentionRejectsFullyMaskedRow) {
  Tape t;
  Var x = t.constant(Mat::Ones(2, 2));
  ad::BoolMat allowed = ad::BoolMat::Constant(2, 2, true);
  allowed(1, 0) = allowed(1, 1) = false;
  EXPECT_THROW(ad::attention(x, x, x, Var{}, allowed, 1, "dead"), Error);
}

TEST(Autodiff, AttentionNaNIsReportedWithLabel) {
  Tape t;
  Mat bad = Mat::Ones(2, 2);
  bad(0, 0) = std::nan("");
  Var x = t.constant(bad);
  try {
    ad::attention(x, x, x, Var{}, ad::BoolMat::Constant(2, 2, true), 1, "layer 3");
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 3"), std::string::npos);
  }
}

TEST(Autodiff, ParamNodeIsSharedWithinTape) {
  ParamSet ps;
  ps.add("w", Mat::Ones(2, 2));
  Tape t;
  Var a = t.param(ps.get("w"));
  Var b = t.param(ps.get("w"));
  EXPECT_EQ(a.id(), b.id());
  t.backward(ad::sum(ad::add(a, b)));
  EXPECT_DOUBLE_EQ(ps.get("w").grad(0, 0), 2.0);
}

TEST(Autodiff, BackwardRequiresScalar) {
  Tape t;
  EXPECT_THROW(t.backward(t.constant(Mat::Ones(2, 1))), InvalidArgument);
}

}  // namespace
