#include "saber/dataset_io.hpp"

#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "saber/error.hpp"
#include "saber/hashing.hpp"

namespace saber {

std::string serialize_dataset(const Dataset& ds) {
  std::string out = fmt::format("{{\"format\":\"{}\",\"N\":{}}}\n", kDatasetFormat, ds.shots);
  for (const auto& s : ds.sequences) {
    nlohmann::json ids = s.icd_ids;
    out += fmt::format("{{\"query\":{},\"icds\":{},\"score\":{:.17g}}}\n",
                       nlohmann::json(s.query_id).dump(), ids.dump(), s.score);
  }
  return out;
}

Dataset parse_dataset(const std::string& text) {
  Dataset ds;
  std::size_t start = 0;
  int line_no = 0;
  bool header = false;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(fmt::format("line {}: malformed JSON: {}", line_no, e.what()));
    }
    try {
      if (!header) {
        if (j.value("format", "") != kDatasetFormat) {
          throw FormatError(fmt::format("line {}: expected format '{}'", line_no, kDatasetFormat));
        }
        ds.shots = j.at("N").get<int>();
        header = true;
        continue;
      }
      SequenceExample s;
      s.query_id = j.at("query").get<std::string>();
      s.icd_ids = j.at("icds").get<std::vector<std::string>>();
      s.score = j.at("score").get<double>();
      ds.sequences.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(fmt::format("line {}: {}", line_no, e.what()));
    }
  }
  if (!header) throw FormatError("line 1: missing header");
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_file(path, serialize_dataset(ds));
}

Dataset load_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path)); }

void validate_dataset(const Dataset& ds, const DemoLibrary& library) {
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    const auto& s = ds.sequences[i];
    if (static_cast<int>(s.icd_ids.size()) != ds.shots) {
      throw FormatError(fmt::format("sequence {} (query '{}') has {} ICDs, expected {}", i,
                                    s.query_id, s.icd_ids.size(), ds.shots));
    }
    std::set<std::string> seen;
    for (const auto& id : s.icd_ids) {
      if (!library.contains(id)) {
        throw FormatError(fmt::format("sequence {}: unknown ICD id '{}'", i, id));
      }
      if (!seen.insert(id).second) {
        throw FormatError(fmt::format("sequence {}: ICD '{}' repeated", i, id));
      }
    }
  }
}

}  // namespace saber
