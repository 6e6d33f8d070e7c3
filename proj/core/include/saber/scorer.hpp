#pragma once

#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "saber/store.hpp"

namespace saber {

struct ScoreRequest {
  std::string query_id;
  std::vector<std::string> icd_ids;
};

// C_M: higher is better. Implementations must be safe under concurrent calls.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(const ScoreRequest& req) = 0;
  // Default implementation scores one request at a time, in order.
  virtual std::vector<double> score_many(std::span<const ScoreRequest> reqs);
};

struct OracleConfig {
  double w_match = 1.0;
  double w_sim = 0.5;
  double w_red = 0.5;
  double w_pos = 0.1;
};

// Closed-form stand-in for an LVLM log-likelihood:
//   Σ_i (1 + w_pos·i)·[w_match·1(task_i = task_q) + w_sim·cos(q_i, q_q)
//                      − w_red·max_{i'<i} cos(qr_i, qr_i')]
// with 1-based i and the max term 0 for the first ICD.
class OracleScorer final : public Scorer {
 public:
  OracleScorer(const DemoLibrary& library, const std::vector<QuerySample>& queries,
               OracleConfig cfg = {});
  double score(const ScoreRequest& req) override;

 private:
  const DemoLibrary& library_;
  std::unordered_map<std::string, const QuerySample*> queries_;
  OracleConfig cfg_;
};

// Scores one sequence against `query` directly (no id lookup for the query).
double oracle_score(const QuerySample& query, std::span<const DemoRecord* const> icds,
                    const OracleConfig& cfg = {});

}  // namespace saber
