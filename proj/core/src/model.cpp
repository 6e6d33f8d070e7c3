#include "saber/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "saber/error.hpp"

namespace saber::model {

bool ModelConfig::is_task_layer(int layer) const {
  return std::find(task_layers.begin(), task_layers.end(), layer) != task_layers.end();
}

void ModelConfig::validate() const {
  if (d <= 0) throw ConfigError("model.d must be positive");
  if (n_layers <= 0) throw ConfigError("model.n_layers must be positive");
  if (n_heads <= 0 || d % n_heads != 0) {
    throw ConfigError(fmt::format("model width {} not divisible by {} heads", d, n_heads));
  }
  for (int l : task_layers) {
    if (l < 1 || l > n_layers) {
      throw ConfigError(fmt::format("task layer {} outside 1..{}", l, n_layers));
    }
  }
  if (max_seq < 2) throw ConfigError("model.max_seq must be at least 2");
  if (!(t_floor > 0.0 && t_floor < 0.5)) throw ConfigError("model.t_floor out of range");
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"d", cfg.d},
          {"n_layers", cfg.n_layers},
          {"n_heads", cfg.n_heads},
          {"task_layers", cfg.task_layers},
          {"alpha_init", cfg.alpha_init},
          {"max_seq", cfg.max_seq},
          {"t_floor", cfg.t_floor},
          {"init_std", cfg.init_std},
          {"fusion",
           {{"mode", fusion::to_string(cfg.fusion.mode)},
            {"elementwise_gate", cfg.fusion.elementwise_gate},
            {"ternary_theta", cfg.fusion.ternary_theta}}}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.d = j.at("d").get<int>();
  cfg.n_layers = j.value("n_layers", cfg.n_layers);
  cfg.n_heads = j.value("n_heads", cfg.n_heads);
  cfg.task_layers = j.value("task_layers", cfg.task_layers);
  cfg.alpha_init = j.value("alpha_init", cfg.alpha_init);
  cfg.max_seq = j.value("max_seq", cfg.max_seq);
  cfg.t_floor = j.value("t_floor", cfg.t_floor);
  cfg.init_std = j.value("init_std", cfg.init_std);
  if (j.contains("fusion")) {
    const auto& f = j.at("fusion");
    cfg.fusion.mode = fusion::parse_mode(f.value("mode", std::string("binary")));
    cfg.fusion.elementwise_gate = f.value("elementwise_gate", false);
    cfg.fusion.ternary_theta = f.value("ternary_theta", 0.9);
  }
  cfg.validate();
  return cfg;
}

ad::Mat TaskMask::dense() const {
  const Eigen::Index L = allowed.rows();
  ad::Mat out(L, L);
  for (Eigen::Index i = 0; i < L; ++i) {
    for (Eigen::Index j = 0; j < L; ++j) {
      if (!allowed(i, j)) {
        out(i, j) = -std::numeric_limits<double>::infinity();
      } else {
        out(i, j) = values.valid() ? values.value()(i, j) : 0.0;
      }
    }
  }
  return out;
}

Var relevance_weight(const Var& e_tg, const Var& embeddings, const Var& w1, const Var& b1,
                     const Var& w2, const Var& b2, double t_floor) {
  const Var parts[] = {ad::repeat_rows(e_tg, embeddings.rows()), embeddings};
  Var hidden = ad::gelu(ad::add_row(ad::matmul(ad::concat_cols(parts), w1), b1));
  Var t = ad::sigmoid(ad::add_row(ad::matmul(hidden, w2), b2));
  return ad::clamp(t, t_floor, 1.0 - 1e-7);
}

TaskMask build_task_mask(const Var& embeddings, std::span<const int> icd_positions,
                         int query_position, const Var& t, const Var& alpha,
                         bool task_aware, int layer) {
  const Eigen::Index L = embeddings.rows();
  if (L == 0) throw InvalidArgument("build_task_mask: empty sequence");
  TaskMask mask;
  mask.layer = layer;
  mask.task_aware = task_aware;
  mask.allowed = ad::BoolMat::Zero(L, L);
  for (Eigen::Index i = 0; i < L; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) mask.allowed(i, j) = true;
  }
  if (!task_aware || icd_positions.empty() || query_position >= L) return mask;

  const bool steer = alpha.scalar() != 0.0;
  if (steer) {
    for (int j : icd_positions) mask.allowed(query_position, j) = true;
  }

  // Work on the K = 1 + |I_idx| rows that carry modulation, then scatter.
  Tape& tape = *embeddings.tape();
  std::vector<int> rows{query_position};
  rows.insert(rows.end(), icd_positions.begin(), icd_positions.end());
  const auto K = static_cast<Eigen::Index>(rows.size());

  Var unit = ad::normalize_rows(ad::gather_rows(embeddings, rows));
  Var sims = ad::matmul_nt(unit, unit);
  Var log_t = ad::log(ad::gather_rows(t, rows));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(embeddings.cols()));
  Var scaled = ad::scale(ad::mul_col(sims, log_t), inv_sqrt_d);

  ad::Mat icd_pairs = ad::Mat::Zero(K, K);
  ad::Mat query_row = ad::Mat::Zero(K, K);
  for (Eigen::Index a = 1; a < K; ++a) {
    for (Eigen::Index b = 1; b <= a; ++b) icd_pairs(a, b) = 1.0;
    query_row(0, a) = 1.0;
  }
  Var compact = ad::hadamard(scaled, tape.constant(icd_pairs));
  if (steer) {
    compact = ad::add(compact, ad::scale_by(ad::hadamard(scaled, tape.constant(query_row)),
                                            alpha));
  }
  ad::Mat place = ad::Mat::Zero(L, K);
  for (Eigen::Index a = 0; a < K; ++a) place(rows[static_cast<std::size_t>(a)], a) = 1.0;
  Var p = tape.constant(place);
  mask.values = ad::matmul_nt(ad::matmul(p, compact), p);
  return mask;
}

Var update_task_guider(const Var& e_tg, const Var& hidden, const Var& wq, const Var& wk,
                       const Var& wv, const Var& wo, const Var& ln_gain,
                       const Var& ln_bias, int n_heads) {
  ad::BoolMat all = ad::BoolMat::Constant(1, hidden.rows(), true);
  Var att = ad::attention(ad::matmul(e_tg, wq), ad::matmul(hidden, wk),
                          ad::matmul(hidden, wv), Var{}, all, n_heads, "task-guider update");
  return ad::layer_norm(ad::add(e_tg, ad::matmul(att, wo)), ln_gain, ln_bias);
}

namespace {

std::string blk(int layer, const char* name) { return fmt::format("blk{}.{}", layer, name); }

// Next task-aware layer after `layer`, or 0.
int next_task_layer(const ModelConfig& cfg, int layer) {
  int best = 0;
  for (int l : cfg.task_layers) {
    if (l > layer && (best == 0 || l < best)) best = l;
  }
  return best;
}

}  // namespace

Model::Model(ModelConfig cfg, std::size_t library_size, std::uint64_t seed)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  init_params(library_size, seed);
}

Model::Model(ModelConfig cfg, ParamSet params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
}

void Model::init_params(std::size_t library_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Eigen::Index d = cfg_.d;
  const double s = cfg_.init_std;
  const double s_out = s / std::sqrt(2.0 * cfg_.n_layers);

  fusion::add_params(params_, cfg_.fusion, d, library_size, rng);
  params_.add("pos", normal_matrix(rng, cfg_.max_seq, d, s), false);
  params_.add("alpha", ad::Mat::Constant(1, 1, cfg_.alpha_init), false);

  for (int l = 1; l <= cfg_.n_layers; ++l) {
    params_.add(blk(l, "ln1.g"), ad::Mat::Ones(1, d), false);
    params_.add(blk(l, "ln1.b"), ad::Mat::Zero(1, d), false);
    params_.add(blk(l, "attn.wq"), normal_matrix(rng, d, d, s));
    params_.add(blk(l, "attn.wk"), normal_matrix(rng, d, d, s));
    params_.add(blk(l, "attn.wv"), normal_matrix(rng, d, d, s));
    params_.add(blk(l, "attn.wo"), normal_matrix(rng, d, d, s_out));
    params_.add(blk(l, "ln2.g"), ad::Mat::Ones(1, d), false);
    params_.add(blk(l, "ln2.b"), ad::Mat::Zero(1, d), false);
    params_.add(blk(l, "ff.w1"), normal_matrix(rng, d, 4 * d, s));
    params_.add(blk(l, "ff.b1"), ad::Mat::Zero(1, 4 * d), false);
    params_.add(blk(l, "ff.w2"), normal_matrix(rng, 4 * d, d, s_out));
    params_.add(blk(l, "ff.b2"), ad::Mat::Zero(1, d), false);
    if (cfg_.is_task_layer(l)) {
      params_.add(blk(l, "rel.w1"),
                  normal_matrix(rng, 2 * d, d, 1.0 / std::sqrt(2.0 * static_cast<double>(d))));
      params_.add(blk(l, "rel.b1"), ad::Mat::Zero(1, d), false);
      params_.add(blk(l, "rel.w2"),
                  normal_matrix(rng, d, 1, 1.0 / std::sqrt(static_cast<double>(d))));
      params_.add(blk(l, "rel.b2"), ad::Mat::Zero(1, 1), false);
      if (next_task_layer(cfg_, l) != 0) {
        params_.add(blk(l, "tgu.wq"), normal_matrix(rng, d, d, s));
        params_.add(blk(l, "tgu.wk"), normal_matrix(rng, d, d, s));
        params_.add(blk(l, "tgu.wv"), normal_matrix(rng, d, d, s));
        params_.add(blk(l, "tgu.wo"), normal_matrix(rng, d, d, s));
        params_.add(blk(l, "tgu.ln.g"), ad::Mat::Ones(1, d), false);
        params_.add(blk(l, "tgu.ln.b"), ad::Mat::Zero(1, d), false);
      }
    }
  }
  params_.add("lnf.g", ad::Mat::Ones(1, d), false);
  params_.add("lnf.b", ad::Mat::Zero(1, d), false);
  params_.add("head.scale", ad::Mat::Constant(1, 1, 1.0), false);
  params_.add("head.special", ad::Mat::Zero(1, 3), false);
}

ForwardResult Model::forward(Tape& tape, const fusion::InputSequence& seq, const Var& table,
                             const Var& e_tg0, const ForwardOptions& opts) {
  const Eigen::Index L = seq.embeddings.rows();
  if (L > cfg_.max_seq) {
    throw InvalidArgument(fmt::format("sequence length {} exceeds max_seq {}", L, cfg_.max_seq));
  }
  if (L == 0) throw InvalidArgument("forward: empty sequence");
  auto P = [&](const std::string& name) { return tape.param(params_.get(name)); };

  ForwardResult out;
  Var x = ad::add(seq.embeddings, ad::slice(P("pos"), 0, L, 0, cfg_.d));
  Var tg = e_tg0;
  Var alpha = P("alpha");

  for (int l = 1; l <= cfg_.n_layers; ++l) {
    const bool task = cfg_.is_task_layer(l);
    Var t;
    if (task) {
      if (opts.force_t) {
        t = tape.constant(ad::Mat::Constant(L, 1, *opts.force_t));
      } else {
        t = relevance_weight(tg, seq.embeddings, P(blk(l, "rel.w1")), P(blk(l, "rel.b1")),
                             P(blk(l, "rel.w2")), P(blk(l, "rel.b2")), cfg_.t_floor);
      }
      out.relevance.push_back(t);
    }
    TaskMask mask =
        build_task_mask(seq.embeddings, seq.icd_positions, seq.query_position, t.valid() ? t : x,
                        alpha, task, l);

    Var a = ad::layer_norm(x, P(blk(l, "ln1.g")), P(blk(l, "ln1.b")));
    ad::AttentionTrace trace;
    Var att = ad::attention(ad::matmul(a, P(blk(l, "attn.wq"))),
                            ad::matmul(a, P(blk(l, "attn.wk"))),
                            ad::matmul(a, P(blk(l, "attn.wv"))), mask.values, mask.allowed,
                            cfg_.n_heads, fmt::format("layer {}", l),
                            opts.keep_traces ? &trace : nullptr);
    x = ad::add(x, ad::matmul(att, P(blk(l, "attn.wo"))));
    Var b = ad::layer_norm(x, P(blk(l, "ln2.g")), P(blk(l, "ln2.b")));
    Var ff = ad::gelu(ad::add_row(ad::matmul(b, P(blk(l, "ff.w1"))), P(blk(l, "ff.b1"))));
    x = ad::add(x, ad::add_row(ad::matmul(ff, P(blk(l, "ff.w2"))), P(blk(l, "ff.b2"))));

    if (!x.value().allFinite()) {
      throw NumericError(fmt::format("non-finite hidden state after layer {}", l));
    }
    if (task && next_task_layer(cfg_, l) != 0) {
      tg = update_task_guider(tg, x, P(blk(l, "tgu.wq")), P(blk(l, "tgu.wk")),
                              P(blk(l, "tgu.wv")), P(blk(l, "tgu.wo")), P(blk(l, "tgu.ln.g")),
                              P(blk(l, "tgu.ln.b")), cfg_.n_heads);
    }
    out.masks.push_back(std::move(mask));
    if (opts.keep_traces) out.traces.push_back(std::move(trace));
  }

  Var h = ad::layer_norm(x, P("lnf.g"), P("lnf.b"));
  const Var parts[] = {ad::scale_by(ad::matmul_nt(h, table), P("head.scale")),
                       ad::repeat_rows(P("head.special"), L)};
  out.logits = ad::concat_cols(parts);
  out.final_guider = tg;
  return out;
}

std::vector<double> output_distribution(std::span<const double> logits,
                                        const std::set<int>& forbidden) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!forbidden.count(static_cast<int>(i))) mx = std::max(mx, logits[i]);
  }
  if (mx == -std::numeric_limits<double>::infinity()) {
    throw InvalidArgument("output_distribution: every entry is forbidden");
  }
  std::vector<double> p(logits.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (forbidden.count(static_cast<int>(i))) continue;
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

}  // namespace saber::model
