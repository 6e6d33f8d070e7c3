#include "saber/fusion.hpp"

#include <cmath>
#include <limits>

#include "saber/error.hpp"

namespace saber::fusion {

Mode parse_mode(const std::string& name) {
  if (name == "binary") return Mode::binary;
  if (name == "ternary") return Mode::ternary;
  if (name == "concat") return Mode::concat;
  throw ConfigError("fusion.mode must be one of binary|ternary|concat, got '" + name + "'");
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::binary:
      return "binary";
    case Mode::ternary:
      return "ternary";
    case Mode::concat:
      return "concat";
  }
  return "binary";
}

Var binary_gate(const Var& img, const Var& txt, const Var& w_g, const Var& b_g) {
  const Var both[] = {img, txt};
  Var g = ad::sigmoid(ad::add_row(matmul_nt(ad::concat_cols(both), w_g), b_g));
  Var diff = ad::sub(img, txt);
  Var mixed = g.cols() == 1 ? ad::mul_col(diff, g) : ad::hadamard(diff, g);
  return ad::add(txt, mixed);
}

TernaryOutput ternary_gate(const Var& img, const Var& q, const Var& r, const Var& w_t,
                           const Var& b_t) {
  const Var parts[] = {img, q, r};
  Var logits = ad::add_row(matmul_nt(ad::concat_cols(parts), w_t), b_t);
  Var gates = ad::softmax_rows(logits);
  Var g_i = ad::slice(gates, 0, gates.rows(), 0, 1);
  Var g_q = ad::slice(gates, 0, gates.rows(), 1, 1);
  Var g_r = ad::slice(gates, 0, gates.rows(), 2, 1);
  Var emb = ad::add(ad::add(ad::mul_col(img, g_i), ad::mul_col(q, g_q)), ad::mul_col(r, g_r));
  Var sq = ad::hadamard(gates, gates);
  Tape& t = *img.tape();
  Var reg = ad::matmul(sq, t.constant(ad::Mat::Ones(3, 1)));
  return {emb, gates, reg};
}

Var concat_embed(const Var& img, const Var& q, const Var& r, const Var& r_learn) {
  return ad::add(ad::add(ad::add(img, q), r), r_learn);
}

Var join_query(const Var& e_task, const Var& x_hat, const Var& w_join) {
  const Var parts[] = {e_task, x_hat};
  return matmul_nt(ad::concat_cols(parts), w_join);
}

Var task_guider(const Var& img, const Var& q, const Var& inst, const Var& w_tg) {
  const Var parts[] = {img, q, inst};
  return matmul_nt(ad::concat_cols(parts), w_tg);
}

Var ternary_penalty(const Var& regularizer, double theta) {
  Var excess = ad::clamp(ad::affine(regularizer, 1.0, -theta), 0.0,
                         std::numeric_limits<double>::infinity());
  return ad::mean(excess);
}

void add_params(ParamSet& params, const FusionConfig& cfg, Eigen::Index d,
                std::size_t library_size, std::mt19937_64& rng) {
  const double tok_std = 0.02;
  switch (cfg.mode) {
    case Mode::binary:
      if (cfg.elementwise_gate) {
        params.add(names::kGateW, ad::Mat::Zero(d, 2 * d));
        params.add(names::kGateB, ad::Mat::Zero(1, d), false);
      } else {
        params.add(names::kGateW, ad::Mat::Zero(1, 2 * d));
        params.add(names::kGateB, ad::Mat::Zero(1, 1), false);
      }
      break;
    case Mode::ternary:
      params.add(names::kTernW, ad::Mat::Zero(3, 3 * d));
      params.add(names::kTernB, ad::Mat::Zero(1, 3), false);
      // The query sample is gated too; keep a binary gate for it.
      params.add(names::kGateW, ad::Mat::Zero(1, 2 * d));
      params.add(names::kGateB, ad::Mat::Zero(1, 1), false);
      break;
    case Mode::concat:
      params.add(names::kRLearn,
                 normal_matrix(rng, static_cast<Eigen::Index>(library_size), d, tok_std));
      break;
  }
  params.add(names::kBos, normal_matrix(rng, 1, d, tok_std), false);
  params.add(names::kEos, normal_matrix(rng, 1, d, tok_std), false);
  params.add(names::kTask, normal_matrix(rng, 1, d, tok_std), false);
  // Start ê close to x̂ so the query signal survives the projection.
  ad::Mat join = normal_matrix(rng, d, 2 * d, tok_std);
  join.rightCols(d) += ad::Mat::Identity(d, d);
  params.add(names::kJoin, std::move(join));
  params.add(names::kTaskGuider,
             normal_matrix(rng, d, 3 * d, 1.0 / std::sqrt(3.0 * static_cast<double>(d))));
}

namespace {

ad::Mat stack(const DemoLibrary& library, const Vector DemoRecord::*field, bool& ok) {
  const auto d = static_cast<Eigen::Index>(library.dim());
  ad::Mat m = ad::Mat::Zero(static_cast<Eigen::Index>(library.size()), d);
  ok = true;
  for (std::size_t i = 0; i < library.size(); ++i) {
    const Vector& v = library.at(i).*field;
    if (v.empty()) {
      ok = false;
      continue;
    }
    for (Eigen::Index c = 0; c < d; ++c) m(static_cast<Eigen::Index>(i), c) = v[c];
  }
  return m;
}

const char* missing_for(Mode mode, bool has_r, bool has_qr) {
  if (mode == Mode::binary && !has_qr) return "qr";
  if (mode != Mode::binary && !has_r) return "r";
  return nullptr;
}

}  // namespace

LibraryMatrices LibraryMatrices::from(const DemoLibrary& library) {
  LibraryMatrices m;
  bool ok_img = true;
  bool ok_q = true;
  m.img = stack(library, &DemoRecord::img, ok_img);
  m.q = stack(library, &DemoRecord::q, ok_q);
  m.r = stack(library, &DemoRecord::r, m.has_r);
  m.qr = stack(library, &DemoRecord::qr, m.has_qr);
  if (!ok_img) throw InvalidArgument("library: every ICD needs an img vector");
  return m;
}

Var demo_table(Tape& tape, ParamSet& params, const FusionConfig& cfg,
               const LibraryMatrices& lib) {
  if (const char* missing = missing_for(cfg.mode, lib.has_r, lib.has_qr)) {
    throw InvalidArgument(std::string("library: ICD missing '") + missing + "' vector");
  }
  Var img = tape.constant(lib.img);
  switch (cfg.mode) {
    case Mode::binary:
      return binary_gate(img, tape.constant(lib.qr), tape.param(params.get(names::kGateW)),
                         tape.param(params.get(names::kGateB)));
    case Mode::ternary:
      return ternary_gate(img, tape.constant(lib.q), tape.constant(lib.r),
                          tape.param(params.get(names::kTernW)),
                          tape.param(params.get(names::kTernB)))
          .embedding;
    case Mode::concat:
      return concat_embed(img, tape.constant(lib.q), tape.constant(lib.r),
                          tape.param(params.get(names::kRLearn)));
  }
  throw InvalidArgument("unknown fusion mode");
}

Var embed_query_sample(Tape& tape, ParamSet& params, const FusionConfig& cfg,
                       const QuerySample& query) {
  if (query.img.empty() || query.q.empty()) {
    throw InvalidArgument("query '" + query.id + "' needs img and q vectors");
  }
  Var img = tape.constant(to_row(query.img));
  Var q = tape.constant(to_row(query.q));
  if (cfg.mode == Mode::concat) {
    // R̂ is blank and the query has no learnable row.
    return ad::add(img, q);
  }
  return binary_gate(img, q, tape.param(params.get(names::kGateW)),
                     tape.param(params.get(names::kGateB)));
}

Var embed_query(Tape& tape, ParamSet& params, const FusionConfig& cfg,
                const QuerySample& query) {
  Var x_hat = embed_query_sample(tape, params, cfg, query);
  return join_query(tape.param(params.get(names::kTask)), x_hat,
                    tape.param(params.get(names::kJoin)));
}

Var init_task_guider(Tape& tape, ParamSet& params, const QuerySample& query,
                     const InstructionRecord* inst) {
  if (inst == nullptr || inst->inst_emb.empty()) {
    throw InvalidArgument("task guider: missing instruction embedding");
  }
  if (query.img.empty() || query.q.empty()) {
    throw InvalidArgument("query '" + query.id + "' needs img and q vectors");
  }
  return task_guider(tape.constant(to_row(query.img)), tape.constant(to_row(query.q)),
                     tape.constant(to_row(inst->inst_emb)),
                     tape.param(params.get(names::kTaskGuider)));
}

InputSequence assemble_sequence(Tape& tape, ParamSet& params, const Var& e_hat,
                                const Var& table, std::span<const int> icd_indices,
                                bool with_eos) {
  std::vector<Var> rows{tape.param(params.get(names::kBos)), e_hat};
  InputSequence seq;
  if (!icd_indices.empty()) {
    rows.push_back(ad::gather_rows(table, icd_indices));
    for (std::size_t i = 0; i < icd_indices.size(); ++i) {
      seq.icd_positions.push_back(static_cast<int>(i) + 2);
    }
  }
  if (with_eos) rows.push_back(tape.param(params.get(names::kEos)));
  seq.embeddings = ad::concat_rows(rows);
  seq.has_eos = with_eos;
  return seq;
}

InputSequence build_input_sequence(Tape& tape, ParamSet& params, const FusionConfig& cfg,
                                   const QuerySample& query, const DemoLibrary& library,
                                   std::span<const std::string> icd_ids, bool with_eos) {
  Var e_hat = embed_query(tape, params, cfg, query);
  std::vector<Var> rows{tape.param(params.get(names::kBos)), e_hat};
  InputSequence seq;
  for (std::size_t i = 0; i < icd_ids.size(); ++i) {
    const auto index = library.index_of(icd_ids[i]);
    if (!index) throw InvalidArgument("unknown ICD id '" + icd_ids[i] + "'");
    const DemoRecord& rec = library.at(*index);
    if (const char* missing = missing_for(cfg.mode, rec.has_r(), rec.has_qr())) {
      throw InvalidArgument("ICD '" + rec.id + "' missing '" + missing + "' vector");
    }
    Var img = tape.constant(to_row(rec.img));
    Var e;
    switch (cfg.mode) {
      case Mode::binary:
        e = binary_gate(img, tape.constant(to_row(rec.qr)),
                        tape.param(params.get(names::kGateW)),
                        tape.param(params.get(names::kGateB)));
        break;
      case Mode::ternary:
        e = ternary_gate(img, tape.constant(to_row(rec.q)), tape.constant(to_row(rec.r)),
                         tape.param(params.get(names::kTernW)),
                         tape.param(params.get(names::kTernB)))
                .embedding;
        break;
      case Mode::concat:
        e = concat_embed(img, tape.constant(to_row(rec.q)), tape.constant(to_row(rec.r)),
                         ad::row(tape.param(params.get(names::kRLearn)),
                                 static_cast<Eigen::Index>(*index)));
        break;
    }
    rows.push_back(e);
    seq.icd_positions.push_back(static_cast<int>(i) + 2);
  }
  if (with_eos) rows.push_back(tape.param(params.get(names::kEos)));
  seq.embeddings = ad::concat_rows(rows);
  seq.has_eos = with_eos;
  return seq;
}

}  // namespace saber::fusion
