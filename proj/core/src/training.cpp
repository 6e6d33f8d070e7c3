#include "saber/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "saber/error.hpp"
#include "saber/fusion.hpp"

namespace saber::training {

void LossWeights::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !(ternary >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (!(t0 > 0.0) || !(t_mult >= 1.0)) throw ConfigError("train.t0 > 0 and train.t_mult >= 1");
}

nlohmann::json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch}, {"ce", e.ce}, {"sparse", e.sparse}, {"l2", e.l2}, {"lr", e.lr}};
}

Var ce_loss(const Var& logits, std::span<const int> targets) {
  return ad::cross_entropy(logits, targets);
}

Var sparsity_loss(std::span<const model::TaskMask> masks, std::span<const int> icd_positions) {
  Var total;
  for (const auto& mask : masks) {
    if (!mask.task_aware || !mask.values.valid() || icd_positions.empty()) continue;
    ad::BoolMat support(static_cast<Eigen::Index>(icd_positions.size()), mask.allowed.cols());
    for (std::size_t r = 0; r < icd_positions.size(); ++r) {
      support.row(static_cast<Eigen::Index>(r)) = mask.allowed.row(icd_positions[r]);
    }
    Var kl = ad::kl_to_uniform_rows(ad::gather_rows(mask.values, icd_positions), support);
    kl = ad::scale(kl, 1.0 / static_cast<double>(icd_positions.size()));
    total = total.valid() ? ad::add(total, kl) : kl;
  }
  return total;
}

Var total_loss(const Var& ce, const Var& sparse, const Var& w_tg, const LossWeights& w,
               const Var& ternary) {
  Var out = ce;
  if (sparse.valid()) out = ad::add(out, ad::scale(sparse, w.lambda1));
  out = ad::add(out, ad::scale(ad::sum_squares(w_tg), w.lambda2));
  if (ternary.valid()) out = ad::add(out, ad::scale(ternary, w.ternary));
  return out;
}

TapeContext make_context(Tape& tape, model::Model& model, const fusion::LibraryMatrices& lib) {
  TapeContext ctx;
  auto& params = model.params();
  const auto& fcfg = model.config().fusion;
  if (fcfg.mode == fusion::Mode::ternary) {
    auto out = fusion::ternary_gate(tape.constant(lib.img), tape.constant(lib.q),
                                    tape.constant(lib.r),
                                    tape.param(params.get(fusion::names::kTernW)),
                                    tape.param(params.get(fusion::names::kTernB)));
    ctx.table = out.embedding;
    ctx.ternary_penalty = fusion::ternary_penalty(out.regularizer, fcfg.ternary_theta);
  } else {
    ctx.table = fusion::demo_table(tape, params, fcfg, lib);
  }
  return ctx;
}

LossParts sequence_loss(Tape& tape, model::Model& model, const TapeContext& ctx,
                        const QuerySample& query, const InstructionRecord& inst,
                        std::span<const int> icds, const LossWeights& w) {
  auto& params = model.params();
  const auto& fcfg = model.config().fusion;
  const model::Vocab vocab{static_cast<int>(ctx.table.rows())};
  Var e_hat = fusion::embed_query(tape, params, fcfg, query);
  Var e_tg = fusion::init_task_guider(tape, params, query, &inst);

  std::vector<Var> last_rows;
  std::vector<int> targets;
  model::ForwardResult full;
  for (std::size_t k = 0; k <= icds.size(); ++k) {
    auto seq = fusion::assemble_sequence(tape, params, e_hat, ctx.table, icds.first(k), false);
    auto res = model.forward(tape, seq, ctx.table, e_tg);
    last_rows.push_back(ad::row(res.logits, res.logits.rows() - 1));
    targets.push_back(k < icds.size() ? icds[k] : vocab.eos());
    if (k == icds.size()) {
      full = std::move(res);
      LossParts parts;
      parts.ce = ce_loss(ad::concat_rows(last_rows), targets);
      parts.sparse = sparsity_loss(full.masks, seq.icd_positions);
      if (!parts.sparse.valid()) parts.sparse = tape.constant(ad::Mat::Zero(1, 1));
      Var w_tg = tape.param(params.get(fusion::names::kTaskGuider));
      parts.l2 = ad::sum_squares(w_tg);
      parts.ternary = ctx.ternary_penalty;
      parts.total = total_loss(parts.ce, parts.sparse, w_tg, w, parts.ternary);
      return parts;
    }
  }
  throw InvalidArgument("sequence_loss: unreachable");
}

AdamW::AdamW(const TrainConfig& cfg, const ParamSet& params)
    : b1_(cfg.beta1), b2_(cfg.beta2), eps_(cfg.eps), wd_(cfg.weight_decay) {
  for (const auto& p : params) {
    m_.push_back(ad::Mat::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(ad::Mat::Zero(p.value.rows(), p.value.cols()));
  }
}

void AdamW::step(ParamSet& params, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.at(i);
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * p.grad;
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * p.grad.cwiseProduct(p.grad);
    if (p.decay) p.value *= 1.0 - lr * wd_;
    p.value.array() -=
        lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

double lr_at(double epoch, const TrainConfig& cfg) {
  double t = epoch;
  double period = cfg.t0;
  while (t >= period) {
    t -= period;
    period *= cfg.t_mult;
  }
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t / period));
}

TrainResult fit(model::Model& model, const Dataset& ds, const DemoLibrary& library,
                const std::vector<QuerySample>& queries, const InstructionRecord& inst,
                const TrainConfig& cfg, const LossWeights& w) {
  cfg.validate();
  w.validate();
  if (ds.sequences.empty()) throw InvalidArgument("fit: empty training set");
  validate_dataset(ds, library);
  const auto by_id = index_queries(queries);

  struct Item {
    const QuerySample* query;
    std::vector<int> icds;
  };
  std::vector<Item> items;
  for (const auto& s : ds.sequences) {
    auto it = by_id.find(s.query_id);
    if (it == by_id.end()) throw InvalidArgument("fit: unknown query id '" + s.query_id + "'");
    Item item{it->second, {}};
    for (const auto& id : s.icd_ids) item.icds.push_back(static_cast<int>(*library.index_of(id)));
    items.push_back(std::move(item));
  }

  const auto lib = fusion::LibraryMatrices::from(library);
  AdamW opt(cfg, model.params());
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batches = (items.size() + cfg.batch - 1) / static_cast<std::size_t>(cfg.batch);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr_at(epoch, cfg);
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * static_cast<std::size_t>(cfg.batch);
      const std::size_t hi = std::min(items.size(), lo + static_cast<std::size_t>(cfg.batch));
      const double inv = 1.0 / static_cast<double>(hi - lo);
      model.params().zero_grad();
      Tape tape;
      TapeContext ctx = make_context(tape, model, lib);
      Var batch_loss;
      for (std::size_t i = lo; i < hi; ++i) {
        const Item& item = items[order[i]];
        LossParts parts = sequence_loss(tape, model, ctx, *item.query, inst, item.icds, w);
        if (!std::isfinite(parts.total.scalar())) {
          throw NumericError(fmt::format(
              "training diverged: epoch {} batch {} query '{}' loss {} (ce {}, sparse {})", epoch,
              b, item.query->id, parts.total.scalar(), parts.ce.scalar(), parts.sparse.scalar()));
        }
        log.ce += parts.ce.scalar();
        log.sparse += parts.sparse.scalar();
        Var scaled = ad::scale(parts.total, inv);
        batch_loss = batch_loss.valid() ? ad::add(batch_loss, scaled) : scaled;
      }
      tape.backward(batch_loss);
      const double lr =
          lr_at(static_cast<double>(epoch) + static_cast<double>(b) / static_cast<double>(batches),
                cfg);
      opt.step(model.params(), lr);
      if (!model.params().all_finite()) {
        throw NumericError(fmt::format("training diverged: non-finite parameters after epoch {} "
                                       "batch {}",
                                       epoch, b));
      }
    }
    log.ce /= static_cast<double>(items.size());
    log.sparse /= static_cast<double>(items.size());
    log.l2 = model.params().get(fusion::names::kTaskGuider).value.squaredNorm();
    if (cfg.on_epoch) cfg.on_epoch(log);
    spdlog::debug("epoch {} ce {:.6f} sparse {:.6f} lr {:.3g}", epoch, log.ce, log.sparse, log.lr);
    result.log.push_back(log);
  }
  result.steps = opt.steps();
  return result;
}

}  // namespace saber::training
