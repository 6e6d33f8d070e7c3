#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "saber/autodiff.hpp"
#include "saber/fusion.hpp"
#include "saber/params.hpp"
#include "saber/store.hpp"

namespace saber::model {

using ad::Tape;
using ad::Var;

struct ModelConfig {
  int d = 0;                       // model width, equals the store dimension
  int n_layers = 4;
  int n_heads = 8;
  std::vector<int> task_layers{1, 3};  // 1-based layer indices
  double alpha_init = 1.0;
  int max_seq = 7;
  double t_floor = 1e-6;
  double init_std = 0.02;
  fusion::FusionConfig fusion;

  bool is_task_layer(int layer) const;  // 1-based
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Vocabulary layout: demonstrations occupy [0, |DL|), then the specials.
struct Vocab {
  int library_size = 0;
  int size() const { return library_size + 3; }
  int bos() const { return library_size; }
  int eos() const { return library_size + 1; }
  int task() const { return library_size + 2; }
};

struct TaskMask {
  int layer = 0;          // 1-based
  bool task_aware = false;
  Var values;             // L×L additive modulation; invalid for plain layers
  ad::BoolMat allowed;    // false entries are −∞
  ad::Mat dense() const;  // values with −∞ filled in, for inspection
};

// t_i = clamp(σ(MLP([e_TG ⊕ e_i])), t_floor, 1 − 1e-7) for every row of
// `embeddings`; MLP is 2d→d (GELU) →1. Returns L×1.
Var relevance_weight(const Var& e_tg, const Var& embeddings, const Var& w1, const Var& b1,
                     const Var& w2, const Var& b2, double t_floor);

// For task-aware layers: M[i][j] = sim(e_i,e_j)/√d·log t_i for ICD pairs j ≤ i,
// M[q][j] = α·sim(ê,e_j)/√d·log t_q for j ∈ I_idx (the query row may look
// forward; this support is dropped when α is exactly 0), 0 on other causal
// pairs and −∞ on the future. Plain layers get the causal mask.
TaskMask build_task_mask(const Var& embeddings, std::span<const int> icd_positions,
                         int query_position, const Var& t, const Var& alpha,
                         bool task_aware, int layer);

// Single-query cross attention from the guider into H, residual, layer norm.
Var update_task_guider(const Var& e_tg, const Var& hidden, const Var& wq, const Var& wk,
                       const Var& wv, const Var& wo, const Var& ln_gain,
                       const Var& ln_bias, int n_heads);

struct ForwardOptions {
  std::optional<double> force_t;  // replace every relevance weight
  bool keep_traces = false;
};

struct ForwardResult {
  Var logits;                   // L×(|DL|+3)
  std::vector<TaskMask> masks;  // one per layer
  std::vector<Var> relevance;   // L×1 per task-aware layer
  std::vector<ad::AttentionTrace> traces;  // per layer when requested
  Var final_guider;
};

class Model {
 public:
  // Fresh parameters for a library of `library_size` demonstrations.
  Model(ModelConfig cfg, std::size_t library_size, std::uint64_t seed);
  // Wraps existing parameters (checkpoint reload).
  Model(ModelConfig cfg, ParamSet params);

  const ModelConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  ForwardResult forward(Tape& tape, const fusion::InputSequence& seq, const Var& table,
                        const Var& e_tg0, const ForwardOptions& opts = {});

 private:
  void init_params(std::size_t library_size, std::uint64_t seed);

  ModelConfig cfg_;
  ParamSet params_;
};

// Softmax over logits with forbidden ids set to −∞. Throws InvalidArgument
// when every entry is forbidden.
std::vector<double> output_distribution(std::span<const double> logits,
                                        const std::set<int>& forbidden);

}  // namespace saber::model
