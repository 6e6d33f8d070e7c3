#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "saber/store.hpp"

namespace saber::perturb {

enum class Mode { standard, random_q, random_r, dislocation_q, dislocation_r };
Mode parse_mode(const std::string& name);  // standard|random-q|random-r|dislocation-q|dislocation-r
std::string to_string(Mode mode);

struct Triplet {
  std::string id;
  std::string image_ref;
  std::string q;
  std::string r;
  bool operator==(const Triplet&) const = default;
};

Triplet triplet_of(const DemoRecord& rec);

// Random modes copy one seeded member's Q (or R) over every member and need
// at least two members; dislocation modes replace every Q (or R) with
// `caption`. Only one field class is ever touched.
std::vector<Triplet> perturb_sequence(std::span<const Triplet> seq, Mode mode, std::uint64_t seed,
                                      const std::string& caption);

// Converts triplets back into records for prompt assembly.
std::vector<DemoRecord> apply(std::span<const Triplet> seq, const DemoLibrary& library);

}  // namespace saber::perturb
