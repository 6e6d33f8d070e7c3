#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "saber/dataset_io.hpp"
#include "saber/model.hpp"
#include "saber/store.hpp"

namespace saber::training {

using ad::Tape;
using ad::Var;

struct LossWeights {
  double lambda1 = 0.1;   // sparsity
  double lambda2 = 1e-4;  // ‖W_TG‖²
  double ternary = 1.0;   // ternary-gate constraint penalty (ternary mode only)
  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double ce = 0.0;
  double sparse = 0.0;
  double l2 = 0.0;
  double lr = 0.0;
};
nlohmann::json to_json(const EpochLog& e);

struct TrainConfig {
  double lr = 1e-4;
  int batch = 128;
  int epochs = 20;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double t0 = 5.0;      // first restart period, in epochs
  double t_mult = 2.0;
  std::function<void(const EpochLog&)> on_epoch;
  void validate() const;
};

// Mean −log p(target) over rows. Throws InvalidArgument for out-of-vocabulary targets.
Var ce_loss(const Var& logits, std::span<const int> targets);

// Σ over task-aware masks of (1/|I_idx|)·Σ_{i∈I_idx} KL(softmax(M_i:) ‖ U),
// each row restricted to its finite (allowed) entries. Plain masks add 0.
Var sparsity_loss(std::span<const model::TaskMask> masks, std::span<const int> icd_positions);

struct LossParts {
  Var total;
  Var ce;
  Var sparse;
  Var l2;
  Var ternary;  // invalid unless the fusion mode is ternary
};

// ce + λ1·sparse + λ2·‖W_TG‖² (+ ternary penalty when given).
Var total_loss(const Var& ce, const Var& sparse, const Var& w_tg, const LossWeights& w,
               const Var& ternary = Var{});

// Shared per-tape inputs: the gated demo table is built once per tape.
struct TapeContext {
  Var table;
  Var ternary_penalty;  // ternary mode only
};
TapeContext make_context(Tape& tape, model::Model& model, const fusion::LibraryMatrices& lib);

// Loss of one training sequence. Every target is predicted from its exact
// inference-time prefix [BOS, ê, x_1..x_k] (k = 0..N, the last target EOS);
// the sparsity term uses the masks of the full-length prefix.
LossParts sequence_loss(Tape& tape, model::Model& model, const TapeContext& ctx,
                        const QuerySample& query, const InstructionRecord& inst,
                        std::span<const int> icds, const LossWeights& w);

// One AdamW step over every parameter, using Parameter::grad.
class AdamW {
 public:
  AdamW(const TrainConfig& cfg, const ParamSet& params);
  void step(ParamSet& params, double lr);
  long steps() const { return t_; }

 private:
  double b1_, b2_, eps_, wd_;
  long t_ = 0;
  std::vector<ad::Mat> m_, v_;
};

// Cosine annealing with warm restarts; `epoch` may be fractional.
double lr_at(double epoch, const TrainConfig& cfg);

struct TrainResult {
  std::vector<EpochLog> log;
  long steps = 0;
};

// Trains in place. Every sequence must reference ids of `library` and every
// query id must be in `queries`.
TrainResult fit(model::Model& model, const Dataset& ds, const DemoLibrary& library,
                const std::vector<QuerySample>& queries, const InstructionRecord& inst,
                const TrainConfig& cfg, const LossWeights& w);

}  // namespace saber::training
