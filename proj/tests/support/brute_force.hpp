#pragma once

// Exhaustive references for the search code, written without reusing any
// of its helpers.

#include <algorithm>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "saber/dataset_io.hpp"
#include "saber/scorer.hpp"
#include "test_support.hpp"

namespace saber::testing {

// Every ordered tuple of `n` distinct candidates, scored one at a time and
// ranked by score (descending) then by id tuple.
inline std::vector<SequenceExample> exhaustive_ranking(const std::string& query,
                                                       const std::vector<std::string>& cands,
                                                       int n, Scorer& scorer) {
  std::vector<SequenceExample> all;
  std::vector<std::string> cur;
  std::vector<bool> used(cands.size(), false);
  std::function<void()> rec = [&] {
    if (static_cast<int>(cur.size()) == n) {
      all.push_back({query, cur, scorer.score({query, cur})});
      return;
    }
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (used[i]) continue;
      used[i] = true;
      cur.push_back(cands[i]);
      rec();
      cur.pop_back();
      used[i] = false;
    }
  };
  rec();
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.icd_ids < b.icd_ids;
  });
  return all;
}

// argmax_x C(prefix + x) over unused candidates, smallest id on ties.
inline std::string exhaustive_argmax(const std::string& query,
                                     const std::vector<std::string>& prefix,
                                     const std::vector<std::string>& cands, Scorer& scorer) {
  std::string best;
  double best_score = 0.0;
  for (const auto& c : cands) {
    if (std::find(prefix.begin(), prefix.end(), c) != prefix.end()) continue;
    auto seq = prefix;
    seq.push_back(c);
    const double s = scorer.score({query, seq});
    if (best.empty() || s > best_score || (s == best_score && c < best)) {
      best = c;
      best_score = s;
    }
  }
  return best;
}

// Exhaustive Gap written out directly: same summation order as a plain
// double loop over (a, b).
inline double brute_gap(const std::vector<SequenceExample>& seqs, Scorer& scorer) {
  double total = 0.0;
  for (const auto& s : seqs) {
    const std::size_t L = s.icd_ids.size();
    double sum = 0.0;
    for (std::size_t a = 0; a < L; ++a) {
      for (std::size_t b = 0; b < L; ++b) {
        if (a == b) continue;
        auto ids = s.icd_ids;
        ids[a] = ids[b];
        sum += scorer.score({s.query_id, ids});
      }
    }
    total += scorer.score({s.query_id, s.icd_ids}) - sum / static_cast<double>(L * (L - 1));
  }
  return total / static_cast<double>(seqs.size());
}

// A small random store for search checks. Some records copy another
// record's vectors and task so exact score ties occur.
inline Store tie_prone_store(int size, int dim, std::uint64_t seed) {
  Store s = random_store(size, dim, seed, 2, 1);
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  DemoLibrary lib(static_cast<std::size_t>(dim));
  std::vector<DemoRecord> recs = s.library.records();
  for (std::size_t i = 1; i < recs.size(); ++i) {
    if (std::bernoulli_distribution(0.3)(rng)) {
      const std::size_t src = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
      recs[i].q = recs[src].q;
      recs[i].qr = recs[src].qr;
      recs[i].task_tag = recs[src].task_tag;
    }
  }
  for (auto& r : recs) lib.add(r);
  s.library = std::move(lib);
  return s;
}

}  // namespace saber::testing
