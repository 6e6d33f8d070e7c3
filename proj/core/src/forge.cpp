#include "saber/forge.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "saber/error.hpp"
#include "saber/hashing.hpp"

namespace saber::forge {

void ForgeConfig::validate() const {
  if (k < 1 || m < 0 || shots < 1) throw ConfigError("forge: k, N must be >= 1 and m >= 0");
  if (candidates() < shots) throw ConfigError("forge: cand must be >= N");
  if (beam_width() < 1) throw ConfigError("forge: beam must be >= 1");
  if (parallelism < 1) throw ConfigError("forge: parallelism must be >= 1");
}

ClusterSplit select_query_set(const Store& source, int k, int m, std::uint64_t seed) {
  const DemoLibrary& lib = source.library;
  if (m < 0) throw InvalidArgument("select_query_set: m must be >= 0");
  PointMatrix points(static_cast<Eigen::Index>(lib.size()), static_cast<Eigen::Index>(lib.dim()));
  for (std::size_t i = 0; i < lib.size(); ++i) {
    const auto& img = lib.at(i).img;
    if (img.empty()) throw InvalidArgument("record '" + lib.at(i).id + "' has no img vector");
    for (std::size_t c = 0; c < img.size(); ++c) {
      points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = img[c];
    }
  }
  ClusterSplit out;
  out.clusters = kmeans(points, k, derive_seed(seed, "kmeans"));

  std::set<std::size_t> chosen;
  std::vector<std::size_t> order;
  for (int c = 0; c < k; ++c) {
    std::vector<std::pair<double, std::size_t>> members;
    for (std::size_t i = 0; i < lib.size(); ++i) {
      if (out.clusters.assignments[i] != c) continue;
      const double d =
          (points.row(static_cast<Eigen::Index>(i)) - out.clusters.centroids.row(c)).squaredNorm();
      members.emplace_back(d, i);
    }
    if (static_cast<int>(members.size()) < m) {
      throw InvalidArgument(
          fmt::format("cluster {} has {} members, fewer than m={}", c, members.size(), m));
    }
    std::sort(members.begin(), members.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return lib.at(a.second).id < lib.at(b.second).id;
    });
    for (int j = 0; j < m; ++j) {
      chosen.insert(members[static_cast<std::size_t>(j)].second);
      order.push_back(members[static_cast<std::size_t>(j)].second);
    }
  }

  out.store.library = DemoLibrary(lib.dim());
  for (std::size_t i = 0; i < lib.size(); ++i) {
    if (!chosen.count(i)) out.store.library.add(lib.at(i));
  }
  std::mt19937_64 rng(derive_seed(seed, "pseudo_r"));
  const DemoLibrary& dl = out.store.library;
  out.store.queries = source.queries;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return lib.at(a).id < lib.at(b).id; });
  for (std::size_t i : order) {
    const DemoRecord& r = lib.at(i);
    QuerySample q;
    q.id = r.id;
    q.task_tag = r.task_tag;
    q.img = r.img;
    q.q = r.q;
    q.gt_result = r.text_r;
    q.text_q = r.text_q;
    q.image_ref = r.image_ref;
    if (!dl.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, dl.size() - 1);
      q.pseudo_r = dl.at(pick(rng)).r;
    }
    out.store.queries.push_back(std::move(q));
  }
  out.store.instruction = source.instruction;
  return out;
}

std::vector<std::size_t> sample_candidates(const DemoLibrary& library, int cand,
                                           std::uint64_t seed, const std::string& query_id) {
  std::vector<std::size_t> idx(library.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, "candidates/" + query_id));
  std::size_t take = static_cast<std::size_t>(std::max(cand, 0));
  if (take > idx.size()) {
    spdlog::warn("sample_candidates: library has {} records, fewer than cand={}; using all",
                 idx.size(), cand);
    take = idx.size();
  }
  // Partial Fisher-Yates: the first `take` slots become the sample.
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(take);
  return idx;
}

std::string greedy_extend(std::span<const std::string> prefix,
                          std::span<const std::string> candidates, const std::string& query_id,
                          Scorer& scorer, SearchStats* stats) {
  const std::set<std::string> used(prefix.begin(), prefix.end());
  std::vector<ScoreRequest> reqs;
  for (const auto& c : candidates) {
    if (used.count(c)) continue;
    ScoreRequest r{query_id, {prefix.begin(), prefix.end()}};
    r.icd_ids.push_back(c);
    reqs.push_back(std::move(r));
  }
  if (reqs.empty()) throw InvalidArgument("greedy_extend: no unused candidate");
  const auto scores = scorer.score_many(reqs);
  if (stats) stats->scorer_calls += reqs.size();
  std::size_t best = 0;
  for (std::size_t i = 1; i < reqs.size(); ++i) {
    if (scores[i] > scores[best] ||
        (scores[i] == scores[best] && reqs[i].icd_ids.back() < reqs[best].icd_ids.back())) {
      best = i;
    }
  }
  return reqs[best].icd_ids.back();
}

namespace {

bool ranks_before(const SequenceExample& a, const SequenceExample& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.icd_ids < b.icd_ids;
}

}  // namespace

std::vector<SequenceExample> beam_search(const std::string& query_id,
                                         std::span<const std::string> candidates, int shots,
                                         int beam, Scorer& scorer, SearchStats* stats) {
  if (shots < 1 || beam < 1) throw InvalidArgument("beam_search: shots and beam must be >= 1");
  const std::set<std::string> distinct(candidates.begin(), candidates.end());
  if (distinct.size() != candidates.size()) {
    throw InvalidArgument("beam_search: duplicate candidate ids");
  }
  if (static_cast<int>(candidates.size()) < shots) {
    throw InvalidArgument(fmt::format("beam_search: {} candidates for N={}", candidates.size(),
                                      shots));
  }
  std::vector<SequenceExample> beams{SequenceExample{query_id, {}, 0.0}};
  for (int t = 0; t < shots; ++t) {
    std::vector<ScoreRequest> reqs;
    for (const auto& b : beams) {
      const std::set<std::string> used(b.icd_ids.begin(), b.icd_ids.end());
      for (const auto& c : candidates) {
        if (used.count(c)) continue;
        ScoreRequest r{query_id, b.icd_ids};
        r.icd_ids.push_back(c);
        reqs.push_back(std::move(r));
      }
    }
    const auto scores = scorer.score_many(reqs);
    if (stats) stats->scorer_calls += reqs.size();
    std::vector<SequenceExample> next;
    next.reserve(reqs.size());
    for (std::size_t i = 0; i < reqs.size(); ++i) {
      next.push_back({query_id, std::move(reqs[i].icd_ids), scores[i]});
    }
    std::sort(next.begin(), next.end(), ranks_before);
    if (static_cast<int>(next.size()) > beam) next.resize(static_cast<std::size_t>(beam));
    beams = std::move(next);
  }
  return beams;
}

Dataset build_dataset(const DemoLibrary& library, const std::vector<QuerySample>& queries,
                      Scorer& scorer, const ForgeConfig& cfg, SearchStats* stats) {
  cfg.validate();
  std::vector<const QuerySample*> ordered;
  for (const auto& q : queries) ordered.push_back(&q);
  std::sort(ordered.begin(), ordered.end(),
            [](const QuerySample* a, const QuerySample* b) { return a->id < b->id; });

  std::vector<std::vector<SequenceExample>> results(ordered.size());
  std::vector<std::uint64_t> calls(ordered.size(), 0);
  std::vector<std::string> failures(ordered.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < ordered.size(); i = next++) {
      const QuerySample& q = *ordered[i];
      try {
        std::vector<std::string> cands;
        for (std::size_t idx : sample_candidates(library, cfg.candidates(), cfg.seed, q.id)) {
          cands.push_back(library.at(idx).id);
        }
        SearchStats s;
        results[i] = beam_search(q.id, cands, cfg.shots, cfg.beam_width(), scorer, &s);
        calls[i] = s.scorer_calls;
      } catch (const Error& e) {
        failures[i] = e.what();
      }
    }
  };
  const int threads = std::min<int>(cfg.parallelism, static_cast<int>(ordered.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  Dataset ds;
  ds.shots = cfg.shots;
  std::size_t ok = 0;
  std::uint64_t total_calls = 0;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    total_calls += calls[i];
    if (!failures[i].empty()) {
      spdlog::error("forge: query '{}' skipped: {}", ordered[i]->id, failures[i]);
      continue;
    }
    ++ok;
    for (auto& s : results[i]) ds.sequences.push_back(std::move(s));
  }
  spdlog::info("forge: {}/{} queries, {} sequences, {} scorer calls", ok, ordered.size(),
               ds.sequences.size(), total_calls);
  if (stats) stats->scorer_calls += total_calls;
  if (ok == 0) throw Error("forge: every query failed");
  return ds;
}

}  // namespace saber::forge
