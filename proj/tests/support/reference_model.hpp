#pragma once

// Plain pre-norm causal transformer written directly against the parameter
// values, without the autodiff tape or the mask machinery. With every
// relevance weight forced to 1 and alpha = 0 the model must reduce to it.

#include <cmath>
#include <string>
#include <vector>

#include "saber/model.hpp"

namespace saber::testing {

using ad::Mat;

inline Mat reference_forward(const model::Model& m, const Mat& emb, const Mat& table) {
  const auto& cfg = m.config();
  const auto& P = m.params();
  auto get = [&](const std::string& n) -> const Mat& { return P.get(n).value; };
  auto ln = [](const Mat& x, const Mat& g, const Mat& b) {
    Mat y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double mu = x.row(r).mean();
      const double var = (x.row(r).array() - mu).square().mean();
      y.row(r) = ((x.row(r).array() - mu) / std::sqrt(var + 1e-5)).matrix().cwiseProduct(g) + b;
    }
    return y;
  };
  auto gelu = [](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); };
  const Eigen::Index L = emb.rows(), d = cfg.d, dh = d / cfg.n_heads;
  Mat x = emb + get("pos").topRows(L);
  for (int l = 1; l <= cfg.n_layers; ++l) {
    const std::string p = "blk" + std::to_string(l) + ".";
    Mat a = ln(x, get(p + "ln1.g"), get(p + "ln1.b"));
    Mat q = a * get(p + "attn.wq"), k = a * get(p + "attn.wk"), v = a * get(p + "attn.wv");
    Mat att = Mat::Zero(L, d);
    for (int h = 0; h < cfg.n_heads; ++h) {
      for (Eigen::Index i = 0; i < L; ++i) {
        std::vector<double> w(static_cast<std::size_t>(i + 1));
        double z = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          double s = 0.0;
          for (Eigen::Index c = h * dh; c < (h + 1) * dh; ++c) s += q(i, c) * k(j, c);
          w[static_cast<std::size_t>(j)] = std::exp(s / std::sqrt(static_cast<double>(dh)));
          z += w[static_cast<std::size_t>(j)];
        }
        for (Eigen::Index j = 0; j <= i; ++j) {
          for (Eigen::Index c = h * dh; c < (h + 1) * dh; ++c) {
            att(i, c) += w[static_cast<std::size_t>(j)] / z * v(j, c);
          }
        }
      }
    }
    x += att * get(p + "attn.wo");
    Mat b = ln(x, get(p + "ln2.g"), get(p + "ln2.b"));
    Mat f = (b * get(p + "ff.w1")).rowwise() + get(p + "ff.b1").row(0);
    f = f.unaryExpr(gelu);
    x += (f * get(p + "ff.w2")).rowwise() + get(p + "ff.b2").row(0);
  }
  Mat h = ln(x, get("lnf.g"), get("lnf.b"));
  Mat out(L, table.rows() + 3);
  out.leftCols(table.rows()) = get("head.scale")(0, 0) * h * table.transpose();
  out.rightCols(3) = get("head.special").replicate(L, 1);
  return out;
}

}  // namespace saber::testing
