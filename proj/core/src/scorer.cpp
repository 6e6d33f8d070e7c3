#include "saber/scorer.hpp"

#include <algorithm>

#include "saber/error.hpp"
#include "saber/vec.hpp"

namespace saber {

std::vector<double> Scorer::score_many(std::span<const ScoreRequest> reqs) {
  std::vector<double> out;
  out.reserve(reqs.size());
  for (const auto& r : reqs) out.push_back(score(r));
  return out;
}

double oracle_score(const QuerySample& query, std::span<const DemoRecord* const> icds,
                    const OracleConfig& cfg) {
  if (icds.empty()) return 0.0;
  if (query.task_tag.empty()) {
    throw InvalidArgument("oracle: query '" + query.id + "' has no task tag");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < icds.size(); ++i) {
    const DemoRecord& d = *icds[i];
    if (d.task_tag.empty()) throw InvalidArgument("oracle: ICD '" + d.id + "' has no task tag");
    if (!d.has_q() || !d.has_qr()) {
      throw InvalidArgument("oracle: ICD '" + d.id + "' needs q and qr vectors");
    }
    double term = cfg.w_match * (d.task_tag == query.task_tag ? 1.0 : 0.0) +
                  cfg.w_sim * cosine_sim(d.q, query.q);
    if (i > 0) {
      double red = -1.0;
      for (std::size_t j = 0; j < i; ++j) red = std::max(red, cosine_sim(d.qr, icds[j]->qr));
      term -= cfg.w_red * red;
    }
    total += (1.0 + cfg.w_pos * static_cast<double>(i + 1)) * term;
  }
  return total;
}

OracleScorer::OracleScorer(const DemoLibrary& library, const std::vector<QuerySample>& queries,
                           OracleConfig cfg)
    : library_(library), queries_(index_queries(queries)), cfg_(cfg) {}

double OracleScorer::score(const ScoreRequest& req) {
  auto it = queries_.find(req.query_id);
  if (it == queries_.end()) {
    throw ScorerError("oracle: unknown query id '" + req.query_id + "'", false);
  }
  std::vector<const DemoRecord*> icds;
  icds.reserve(req.icd_ids.size());
  for (const auto& id : req.icd_ids) {
    auto idx = library_.index_of(id);
    if (!idx) throw ScorerError("oracle: unknown ICD id '" + id + "'", false);
    icds.push_back(&library_.at(*idx));
  }
  return oracle_score(*it->second, icds, cfg_);
}

}  // namespace saber
