#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saber/dataset_io.hpp"
#include "saber/scorer.hpp"

namespace saber::compare {

struct Method {
  std::string name;
  std::function<std::vector<std::string>(const QuerySample&)> retrieve;
};

struct MethodReport {
  std::string name;
  double mean = 0.0;
  double gap = 0.0;
  double variance = 0.0;
  std::optional<std::string> error;  // set when the method failed
  std::vector<SequenceExample> sequences;  // scored, in query order
};

struct Report {
  int n = 0;
  std::vector<MethodReport> methods;
  const MethodReport* find(const std::string& name) const;
};

inline constexpr const char* kReportFormat = "saber-report/v1";

// Runs every method on every query (queries sorted by id), scores all
// sequences with `scorer`, and computes mean, Gap (`gap_trials`, seeded by
// `seed`) and Variance. A failing method is reported with its error.
Report compare_methods(const std::vector<QuerySample>& queries, const std::vector<Method>& methods,
                       Scorer& scorer, std::uint64_t seed, int gap_trials);

// {"format":"saber-report/v1","n":..,"methods":[{"name","mean","gap","variance"(,"error")}]}
nlohmann::json report_to_json(const Report& r);
std::string report_to_text(const Report& r);

}  // namespace saber::compare
