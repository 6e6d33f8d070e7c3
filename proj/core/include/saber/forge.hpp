#pragma once

// Training-data construction: query split by clustering, candidate
// sampling, greedy extension and beam search over scorer values.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "saber/dataset_io.hpp"
#include "saber/kmeans.hpp"
#include "saber/scorer.hpp"
#include "saber/store.hpp"

namespace saber::forge {

struct ForgeConfig {
  int k = 8;
  int m = 4;
  int shots = 4;      // N
  int cand = 0;       // 0 means 64·N
  int beam = 0;       // 0 means 2·N
  std::uint64_t seed = 0;
  int parallelism = 1;

  int candidates() const { return cand > 0 ? cand : 64 * shots; }
  int beam_width() const { return beam > 0 ? beam : 2 * shots; }
  void validate() const;
};

struct ClusterSplit {
  Store store;  // library = DL, queries = D̂ (gt in gt_result)
  KMeansResult clusters;
};

// Clusters every demonstration by image embedding and moves the m records
// nearest each centroid (ties by id) into the query set. Query pseudo
// results are the result embedding of a seeded random DL member.
ClusterSplit select_query_set(const Store& source, int k, int m, std::uint64_t seed);

// Uniform sample without replacement, seeded per (seed, query id). Returns
// library indices; takes all of DL (shuffled) when it has fewer than `cand`.
std::vector<std::size_t> sample_candidates(const DemoLibrary& library, int cand,
                                           std::uint64_t seed, const std::string& query_id);

struct SearchStats {
  std::uint64_t scorer_calls = 0;
};

// argmax over candidates not in `prefix` of C_M(prefix + x); ties by id.
std::string greedy_extend(std::span<const std::string> prefix,
                          std::span<const std::string> candidates, const std::string& query_id,
                          Scorer& scorer, SearchStats* stats = nullptr);

// Beam search to length `shots`. The result is sorted by score (descending)
// then by id tuple and holds at most `beam` sequences.
std::vector<SequenceExample> beam_search(const std::string& query_id,
                                         std::span<const std::string> candidates, int shots,
                                         int beam, Scorer& scorer, SearchStats* stats = nullptr);

// Runs sample → beam search for every query and collects all beam results,
// ordered by query id. Queries that fail are logged and skipped.
Dataset build_dataset(const DemoLibrary& library, const std::vector<QuerySample>& queries,
                      Scorer& scorer, const ForgeConfig& cfg, SearchStats* stats = nullptr);

}  // namespace saber::forge
