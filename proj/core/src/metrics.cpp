#include "saber/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <random>

#include <fmt/format.h>

#include "saber/error.hpp"
#include "saber/hashing.hpp"

namespace saber::metrics {

std::string normalize_answer(const std::string& s) {
  std::string out;
  bool space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

double vqa_accuracy(const std::string& answer, std::span<const std::string> ground_truths) {
  if (ground_truths.empty()) throw InvalidArgument("vqa_accuracy: no ground truths");
  const std::string a = normalize_answer(answer);
  int matches = 0;
  for (const auto& g : ground_truths) matches += normalize_answer(g) == a ? 1 : 0;
  return std::min(1.0, 3.0 * matches / 10.0);
}

GapResult gap_metric(std::span<const SequenceExample> sequences, Scorer& scorer,
                     std::uint64_t seed, int trials) {
  if (sequences.empty()) throw InvalidArgument("gap_metric: no sequences");
  if (trials < 0) throw InvalidArgument("gap_metric: trials must be >= 0");
  GapResult res;
  for (const auto& s : sequences) {
    const std::size_t L = s.icd_ids.size();
    if (L < 2) {
      throw InvalidArgument(fmt::format("gap_metric: sequence for '{}' has {} ICD(s), need >= 2",
                                        s.query_id, L));
    }
    std::vector<ScoreRequest> reqs{{s.query_id, s.icd_ids}};
    auto replaced = [&](std::size_t a, std::size_t b) {
      ScoreRequest r{s.query_id, s.icd_ids};
      r.icd_ids[a] = s.icd_ids[b];
      reqs.push_back(std::move(r));
    };
    if (trials == 0) {
      for (std::size_t a = 0; a < L; ++a) {
        for (std::size_t b = 0; b < L; ++b) {
          if (a != b) replaced(a, b);
        }
      }
    } else {
      std::mt19937_64 rng(derive_seed(seed, "gap/" + s.query_id));
      std::uniform_int_distribution<std::size_t> pos(0, L - 1);
      std::uniform_int_distribution<std::size_t> other(0, L - 2);
      for (int t = 0; t < trials; ++t) {
        const std::size_t a = pos(rng);
        std::size_t b = other(rng);
        if (b >= a) ++b;
        replaced(a, b);
      }
    }
    const auto scores = scorer.score_many(reqs);
    double mean = 0.0;
    for (std::size_t i = 1; i < scores.size(); ++i) mean += scores[i];
    mean /= static_cast<double>(scores.size() - 1);
    res.per_query.push_back(scores[0] - mean);
  }
  double total = 0.0;
  for (double v : res.per_query) total += v;
  res.gap = total / static_cast<double>(res.per_query.size());
  return res;
}

double variance_metric(std::span<const double> scores) {
  if (scores.empty()) throw InvalidArgument("variance_metric: empty input");
  double mean = 0.0;
  for (double v : scores) mean += v;
  mean /= static_cast<double>(scores.size());
  double acc = 0.0;
  for (double v : scores) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(scores.size());
}

}  // namespace saber::metrics
