#include "saber/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "saber/error.hpp"
#include "saber/hashing.hpp"
#include "saber/training.hpp"

namespace saber::inference {

Decode parse_decode(const std::string& name) {
  if (name == "greedy") return Decode::greedy;
  if (name == "top-k" || name == "top_k") return Decode::top_k;
  throw ConfigError("gen.decode must be greedy or top-k, got '" + name + "'");
}

void GenConfig::validate() const {
  if (n < 1) throw ConfigError("gen.n must be >= 1");
  if (decode == Decode::top_k && (top_k < 1 || !(temperature > 0.0))) {
    throw ConfigError("top-k decoding needs k >= 1 and temperature > 0");
  }
}

SequenceExample generate_sequence(model::Model& model, const DemoLibrary& library,
                                  const fusion::LibraryMatrices& mats, const QuerySample& query,
                                  const InstructionRecord& inst, const GenConfig& cfg) {
  cfg.validate();
  if (static_cast<std::size_t>(cfg.n) > library.size()) {
    throw InvalidArgument(fmt::format("n={} exceeds the library size {}", cfg.n, library.size()));
  }
  ad::Tape tape;
  auto& params = model.params();
  const auto ctx = training::make_context(tape, model, mats);
  const model::Vocab vocab{static_cast<int>(library.size())};
  ad::Var e_hat = fusion::embed_query(tape, params, model.config().fusion, query);
  ad::Var e_tg = fusion::init_task_guider(tape, params, query, &inst);
  std::mt19937_64 rng(derive_seed(cfg.seed, "generate/" + query.id));

  SequenceExample out;
  out.query_id = query.id;
  std::vector<int> chosen;
  std::set<int> forbidden{vocab.bos(), vocab.eos(), vocab.task()};
  for (int step = 0; step < cfg.n; ++step) {
    auto seq = fusion::assemble_sequence(tape, params, e_hat, ctx.table, chosen, false);
    auto res = model.forward(tape, seq, ctx.table, e_tg);
    const ad::Mat& logits = res.logits.value();
    std::vector<double> last(logits.row(logits.rows() - 1).data(),
                             logits.row(logits.rows() - 1).data() + logits.cols());
    const auto p = model::output_distribution(last, forbidden);

    int pick = -1;
    if (cfg.decode == Decode::greedy) {
      for (int i = 0; i < vocab.library_size; ++i) {
        if (forbidden.count(i)) continue;
        if (pick < 0 || p[i] > p[pick] ||
            (p[i] == p[pick] && library.at(i).id < library.at(pick).id)) {
          pick = i;
        }
      }
    } else {
      std::vector<int> ids;
      for (int i = 0; i < vocab.library_size; ++i) {
        if (!forbidden.count(i)) ids.push_back(i);
      }
      std::sort(ids.begin(), ids.end(), [&](int a, int b) {
        if (last[a] != last[b]) return last[a] > last[b];
        return library.at(a).id < library.at(b).id;
      });
      ids.resize(std::min<std::size_t>(ids.size(), static_cast<std::size_t>(cfg.top_k)));
      std::vector<double> w;
      const double mx = last[ids.front()];
      for (int i : ids) w.push_back(std::exp((last[i] - mx) / cfg.temperature));
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = ids.back();
      for (std::size_t k = 0; k < ids.size(); ++k) {
        u -= w[k];
        if (u < 0.0) {
          pick = ids[k];
          break;
        }
      }
    }
    out.score += std::log(p[pick]);
    chosen.push_back(pick);
    forbidden.insert(pick);
    out.icd_ids.push_back(library.at(pick).id);
  }
  return out;
}

}  // namespace saber::inference
