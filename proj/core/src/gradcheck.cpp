#include "saber/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "saber/model.hpp"
#include "saber/training.hpp"

namespace saber {

GradCheckResult grad_check(const std::function<ad::Var(ad::Tape&)>& loss, ParamSet& params,
                           const GradCheckOptions& opts) {
  params.zero_grad();
  {
    ad::Tape tape;
    tape.backward(loss(tape));
  }
  std::vector<std::pair<std::size_t, Eigen::Index>> coords;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (Eigen::Index i = 0; i < params.at(p).value.size(); ++i) coords.emplace_back(p, i);
  }
  if (coords.size() > opts.samples) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(opts.samples);
    std::sort(coords.begin(), coords.end());
  }
  auto eval = [&] {
    ad::Tape tape;
    return loss(tape).scalar();
  };
  GradCheckResult res;
  for (const auto& [p, i] : coords) {
    auto& param = params.at(p);
    double& x = param.value.data()[i];
    const double saved = x;
    x = saved + opts.eps;
    const double up = eval();
    x = saved - opts.eps;
    const double down = eval();
    x = saved;
    const double numeric = (up - down) / (2.0 * opts.eps);
    const double analytic = param.grad.data()[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.floor});
    const double rel = std::abs(analytic - numeric) / denom;
    ++res.coords;
    if (rel > res.max_rel_err || res.worst.empty()) {
      res.max_rel_err = rel;
      res.worst =
          fmt::format("{}[{},{}]", param.name, i / param.value.cols(), i % param.value.cols());
    }
  }
  return res;
}

GradCheckResult toy_model_gradcheck(fusion::Mode mode, std::uint64_t seed,
                                    const GradCheckOptions& opts) {
  constexpr int d = 8;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  auto vec = [&] {
    Vector v(d);
    for (auto& x : v) x = nd(rng);
    return v;
  };
  DemoLibrary lib(d);
  for (int i = 0; i < 3; ++i) {
    DemoRecord r;
    r.id = fmt::format("d{}", i);
    r.task_tag = "t";
    r.img = vec();
    r.q = vec();
    r.r = vec();
    r.qr = vec();
    lib.add(std::move(r));
  }
  QuerySample q;
  q.id = "q0";
  q.task_tag = "t";
  q.img = vec();
  q.q = vec();
  InstructionRecord inst;
  inst.inst_emb = vec();

  model::ModelConfig cfg;
  cfg.d = d;
  cfg.n_heads = 2;
  cfg.max_seq = 5;
  cfg.fusion.mode = mode;
  // Larger weights than the training init so every path carries signal.
  cfg.init_std = 0.3;
  model::Model m(cfg, lib.size(), seed);
  std::mt19937_64 prng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& p : m.params()) {
    if (p.name.ends_with(".g") || p.name == "head.scale") continue;
    p.value += normal_matrix(prng, p.value.rows(), p.value.cols(), 0.1);
  }
  m.params().get("alpha").value(0, 0) = 0.7;

  const auto mats = fusion::LibraryMatrices::from(lib);
  training::LossWeights w;
  w.lambda1 = 0.5;
  w.lambda2 = 0.1;
  const std::vector<int> icds{2, 0};
  return grad_check(
      [&](ad::Tape& tape) {
        auto ctx = training::make_context(tape, m, mats);
        return training::sequence_loss(tape, m, ctx, q, inst, icds, w).total;
      },
      m.params(), opts);
}

}  // namespace saber
