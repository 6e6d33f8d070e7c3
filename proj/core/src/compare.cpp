#include "saber/compare.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "saber/error.hpp"
#include "saber/hashing.hpp"
#include "saber/metrics.hpp"

namespace saber::compare {

const MethodReport* Report::find(const std::string& name) const {
  for (const auto& m : methods) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

Report compare_methods(const std::vector<QuerySample>& queries, const std::vector<Method>& methods,
                       Scorer& scorer, std::uint64_t seed, int gap_trials) {
  if (queries.empty()) throw InvalidArgument("compare: no queries");
  std::vector<const QuerySample*> ordered;
  for (const auto& q : queries) ordered.push_back(&q);
  std::sort(ordered.begin(), ordered.end(),
            [](const QuerySample* a, const QuerySample* b) { return a->id < b->id; });

  Report report;
  for (const auto& method : methods) {
    MethodReport mr;
    mr.name = method.name;
    try {
      std::vector<ScoreRequest> reqs;
      for (const QuerySample* q : ordered) {
        SequenceExample s{q->id, method.retrieve(*q), 0.0};
        if (report.n == 0) report.n = static_cast<int>(s.icd_ids.size());
        reqs.push_back({s.query_id, s.icd_ids});
        mr.sequences.push_back(std::move(s));
      }
      const auto scores = scorer.score_many(reqs);
      std::vector<double> values;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        mr.sequences[i].score = scores[i];
        values.push_back(scores[i]);
      }
      double total = 0.0;
      for (double v : values) total += v;
      mr.mean = total / static_cast<double>(values.size());
      mr.variance = metrics::variance_metric(values);
      mr.gap = metrics::gap_metric(mr.sequences, scorer, derive_seed(seed, "gap/" + method.name),
                                   gap_trials)
                   .gap;
    } catch (const Error& e) {
      spdlog::error("compare: method '{}' failed: {}", method.name, e.what());
      mr.error = e.what();
    }
    report.methods.push_back(std::move(mr));
  }
  return report;
}

nlohmann::json report_to_json(const Report& r) {
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : r.methods) {
    nlohmann::json j = {{"name", m.name}, {"mean", m.mean}, {"gap", m.gap}, {"variance", m.variance}};
    if (m.error) j["error"] = *m.error;
    methods.push_back(std::move(j));
  }
  return {{"format", kReportFormat}, {"n", r.n}, {"methods", methods}};
}

std::string report_to_text(const Report& r) {
  std::size_t width = 6;
  for (const auto& m : r.methods) width = std::max(width, m.name.size());
  std::string out = fmt::format("{:<{}}  {:>10}  {:>10}  {:>10}\n", "method", width, "mean", "gap",
                                "variance");
  for (const auto& m : r.methods) {
    if (m.error) {
      out += fmt::format("{:<{}}  error: {}\n", m.name, width, *m.error);
    } else {
      out += fmt::format("{:<{}}  {:>10.4f}  {:>10.4f}  {:>10.4f}\n", m.name, width, m.mean, m.gap,
                         m.variance);
    }
  }
  return out;
}

}  // namespace saber::compare
