#pragma once

// Token embeddings for demonstrations and the query sample, the special
// tokens, and the initial Task Guider. All functions build nodes on an
// autodiff tape so the same code serves training, inference and gradient
// checks.

#include <span>
#include <string>
#include <vector>

#include "saber/autodiff.hpp"
#include "saber/params.hpp"
#include "saber/store.hpp"

namespace saber::fusion {

using ad::Tape;
using ad::Var;

enum class Mode { binary, ternary, concat };

Mode parse_mode(const std::string& name);
std::string to_string(Mode mode);

struct FusionConfig {
  Mode mode = Mode::binary;
  bool elementwise_gate = false;  // per-dimension binary gate instead of scalar
  double ternary_theta = 0.9;     // bound on g_I² + g_Q² + g_R²
};

// ---- primitive ops (rows are independent samples) -------------------------

// g = σ(W_g·[img ⊕ txt] + b_g); returns g·img + (1−g)·txt.
// W_g is 1×2d with b_g 1×1 (scalar gate) or d×2d with b_g 1×d (elementwise).
Var binary_gate(const Var& img, const Var& txt, const Var& w_g, const Var& b_g);

struct TernaryOutput {
  Var embedding;  // R×d
  Var gates;      // R×3, columns (g_I, g_Q, g_R), rows sum to 1
  Var regularizer;  // R×1, g_I² + g_Q² + g_R²
};
// (g_I, g_Q, g_R) = softmax(W_t·[img ⊕ q ⊕ r] + b_t) with W_t 3×3d, b_t 1×3.
TernaryOutput ternary_gate(const Var& img, const Var& q, const Var& r, const Var& w_t,
                           const Var& b_t);

// img + q + r + r_learn.
Var concat_embed(const Var& img, const Var& q, const Var& r, const Var& r_learn);

// ê = W_join·[e_task ⊕ x̂] with W_join d×2d.
Var join_query(const Var& e_task, const Var& x_hat, const Var& w_join);

// e_TG^(0) = W_TG·(img ⊕ q ⊕ inst) with W_TG d×3d.
Var task_guider(const Var& img, const Var& q, const Var& inst, const Var& w_tg);

// Mean excess of the ternary regularizer over theta (zero when satisfied).
Var ternary_penalty(const Var& regularizer, double theta);

// ---- parameter-aware helpers ----------------------------------------------

namespace names {
inline constexpr const char* kGateW = "gate.w";
inline constexpr const char* kGateB = "gate.b";
inline constexpr const char* kTernW = "tern.w";
inline constexpr const char* kTernB = "tern.b";
inline constexpr const char* kRLearn = "concat.r_learn";
inline constexpr const char* kBos = "tok.bos";
inline constexpr const char* kEos = "tok.eos";
inline constexpr const char* kTask = "tok.task";
inline constexpr const char* kJoin = "join.w";
inline constexpr const char* kTaskGuider = "tg.w";
}  // namespace names

void add_params(ParamSet& params, const FusionConfig& cfg, Eigen::Index d,
                std::size_t library_size, std::mt19937_64& rng);

// Stacked store vectors of a library, built once and reused across tapes.
struct LibraryMatrices {
  ad::Mat img, q, r, qr;
  bool has_r = true;
  bool has_qr = true;
  static LibraryMatrices from(const DemoLibrary& library);
};

// Gated embedding of every demonstration, |DL|×d. These are the token
// embeddings of the vocabulary and the rows of the tied output head.
Var demo_table(Tape& tape, ParamSet& params, const FusionConfig& cfg,
               const LibraryMatrices& lib);

// x̂: the gated query-sample embedding (1×d). The text side is E_T(Q̂) alone.
Var embed_query_sample(Tape& tape, ParamSet& params, const FusionConfig& cfg,
                       const QuerySample& query);

// ê = W_join·[e_task ⊕ x̂].
Var embed_query(Tape& tape, ParamSet& params, const FusionConfig& cfg,
                const QuerySample& query);

// Throws InvalidArgument when the instruction embedding is absent.
Var init_task_guider(Tape& tape, ParamSet& params, const QuerySample& query,
                     const InstructionRecord* inst);

struct InputSequence {
  Var embeddings;                  // L×d
  std::vector<int> icd_positions;  // I_idx, 0-based rows (2..N+1)
  int query_position = 1;
  bool has_eos = false;
};

// [e_BOS, ê, e_1..e_N, (e_EOS)] with ICD rows gathered from `table`.
InputSequence assemble_sequence(Tape& tape, ParamSet& params, const Var& e_hat,
                                const Var& table, std::span<const int> icd_indices,
                                bool with_eos);

// Same layout, gating each ICD directly from its record. Throws
// InvalidArgument when an ICD lacks the vectors the gate mode needs.
InputSequence build_input_sequence(Tape& tape, ParamSet& params, const FusionConfig& cfg,
                                   const QuerySample& query, const DemoLibrary& library,
                                   std::span<const std::string> icd_ids, bool with_eos);

}  // namespace saber::fusion
