#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "saber/store.hpp"

namespace saber {

// One scored N-shot training sequence.
struct SequenceExample {
  std::string query_id;
  std::vector<std::string> icd_ids;
  double score = 0.0;

  bool operator==(const SequenceExample&) const = default;
};

inline constexpr const char* kDatasetFormat = "saber-ds/v1";

struct Dataset {
  int shots = 0;  // N
  std::vector<SequenceExample> sequences;
};

// Header `{"format":"saber-ds/v1","N":n}` then one
// `{"query":id,"icds":[..],"score":f}` per line. Scores keep 17 digits.
std::string serialize_dataset(const Dataset& ds);
Dataset parse_dataset(const std::string& text);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Throws FormatError if a sequence has the wrong length, repeats an id, or
// names an id missing from `library`.
void validate_dataset(const Dataset& ds, const DemoLibrary& library);

}  // namespace saber
