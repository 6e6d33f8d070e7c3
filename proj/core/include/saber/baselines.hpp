#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saber/store.hpp"

namespace saber::baselines {

// All retrievers return n distinct ids. Similarity retrievers order by
// descending score with ties broken by id.

std::vector<std::string> retrieve_rs(const DemoLibrary& library, int n, std::uint64_t seed);

// cos(img_i, img_q).
std::vector<std::string> retrieve_i2i(const QuerySample& query, const DemoLibrary& library, int n);

enum class Strategy { ams, jes };
// AMS: (cos(img) + cos(q)) / 2. JES: cos([img ⊕ q]_i, [img ⊕ q]_q).
std::vector<std::string> retrieve_iq2iq(const QuerySample& query, const DemoLibrary& library,
                                        int n, Strategy strategy);

// cos([img ⊕ q ⊕ r]_i, [img ⊕ q ⊕ pseudo_r]_q). The pseudo result comes
// from the store; a missing or zero vector is rejected.
std::vector<std::string> retrieve_iqpr(const QuerySample& query, const DemoLibrary& library,
                                       int n);

}  // namespace saber::baselines
