#include "saber/baselines.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "saber/error.hpp"
#include "saber/vec.hpp"

namespace saber::baselines {

namespace {

void check_n(const DemoLibrary& library, int n) {
  if (n < 0 || static_cast<std::size_t>(n) > library.size()) {
    throw InvalidArgument(fmt::format("n={} outside 0..{}", n, library.size()));
  }
}

std::vector<std::string> top_n(const DemoLibrary& library, int n,
                               const std::function<double(const DemoRecord&)>& score) {
  check_n(library, n);
  std::vector<std::pair<double, const DemoRecord*>> scored;
  scored.reserve(library.size());
  for (const auto& r : library) scored.emplace_back(score(r), &r);
  std::partial_sort(scored.begin(), scored.begin() + n, scored.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second->id < b.second->id;
                    });
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back(scored[static_cast<std::size_t>(i)].second->id);
  return ids;
}

const Vector& need(const Vector& v, const std::string& id, const char* field) {
  if (v.empty()) throw InvalidArgument(fmt::format("'{}' has no {} vector", id, field));
  return v;
}

}  // namespace

std::vector<std::string> retrieve_rs(const DemoLibrary& library, int n, std::uint64_t seed) {
  check_n(library, n);
  std::vector<std::size_t> idx(library.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back(library.at(idx[static_cast<std::size_t>(i)]).id);
  return ids;
}

std::vector<std::string> retrieve_i2i(const QuerySample& query, const DemoLibrary& library, int n) {
  const Vector& qi = need(query.img, query.id, "img");
  return top_n(library, n,
               [&](const DemoRecord& r) { return cosine_sim(need(r.img, r.id, "img"), qi); });
}

std::vector<std::string> retrieve_iq2iq(const QuerySample& query, const DemoLibrary& library,
                                        int n, Strategy strategy) {
  const Vector& qi = need(query.img, query.id, "img");
  const Vector& qq = need(query.q, query.id, "q");
  if (strategy == Strategy::ams) {
    return top_n(library, n, [&](const DemoRecord& r) {
      return 0.5 * (cosine_sim(need(r.img, r.id, "img"), qi) + cosine_sim(need(r.q, r.id, "q"), qq));
    });
  }
  const Vector joint = concat(qi, qq);
  return top_n(library, n, [&](const DemoRecord& r) {
    return cosine_sim(concat(need(r.img, r.id, "img"), need(r.q, r.id, "q")), joint);
  });
}

std::vector<std::string> retrieve_iqpr(const QuerySample& query, const DemoLibrary& library,
                                       int n) {
  const Vector& pr = need(query.pseudo_r, query.id, "pseudo_r");
  if (norm(pr) == 0.0) {
    throw InvalidArgument("query '" + query.id + "' has a zero pseudo_r vector");
  }
  const Vector joint = concat(need(query.img, query.id, "img"), need(query.q, query.id, "q"), pr);
  return top_n(library, n, [&](const DemoRecord& r) {
    return cosine_sim(
        concat(need(r.img, r.id, "img"), need(r.q, r.id, "q"), need(r.r, r.id, "r")), joint);
  });
}

}  // namespace saber::baselines
