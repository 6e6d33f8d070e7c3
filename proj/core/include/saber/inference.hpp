#pragma once

#include <cstdint>
#include <string>

#include "saber/dataset_io.hpp"
#include "saber/fusion.hpp"
#include "saber/model.hpp"

namespace saber::inference {

enum class Decode { greedy, top_k };
Decode parse_decode(const std::string& name);

struct GenConfig {
  int n = 4;
  Decode decode = Decode::greedy;
  int top_k = 5;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  void validate() const;
};

// Decodes exactly n ICDs from [BOS, ê]. Every step reruns the full prefix,
// forbids already chosen ids and the special tokens, and (greedy) takes the
// most probable id with ties going to the smaller id string. The returned
// score is the summed log-probability of the chosen ids.
SequenceExample generate_sequence(model::Model& model, const DemoLibrary& library,
                                  const fusion::LibraryMatrices& mats, const QuerySample& query,
                                  const InstructionRecord& inst, const GenConfig& cfg);

}  // namespace saber::inference
