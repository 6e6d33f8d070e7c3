#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace saber {

using Vector = std::vector<float>;

// One demonstration (I, Q, R) as encoder outputs. `qr` is the text encoding
// of the concatenated question and answer; it cannot be derived from q and r.
struct DemoRecord {
  std::string id;
  std::string task_tag;
  Vector img;
  Vector q;
  Vector r;   // optional, empty when absent
  Vector qr;  // optional, required for records used as ICDs
  std::string text_q;
  std::string text_r;
  std::string image_ref;

  bool has_img() const { return !img.empty(); }
  bool has_q() const { return !q.empty(); }
  bool has_r() const { return !r.empty(); }
  bool has_qr() const { return !qr.empty(); }
};

// Demonstration pool, iterated in insertion order.
class DemoLibrary {
 public:
  DemoLibrary() = default;
  explicit DemoLibrary(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  // Throws FormatError on duplicate id or dimension mismatch.
  void add(DemoRecord record);

  const DemoRecord& at(std::size_t index) const { return records_.at(index); }
  const DemoRecord& get(const std::string& id) const;
  std::optional<std::size_t> index_of(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  const std::vector<DemoRecord>& records() const { return records_; }
  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

 private:
  std::size_t dim_ = 0;
  std::vector<DemoRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

// A held-out query (Î, Q̂). The ground-truth answer travels alongside but is
// never fed to a model. `task_tag` is consumed only by the oracle scorer.
struct QuerySample {
  std::string id;
  std::string task_tag;
  Vector img;
  Vector q;
  Vector pseudo_r;  // optional pseudo-result embedding for IQPR
  std::string gt_result;
  std::string text_q;
  std::string image_ref;
};

struct InstructionRecord {
  std::string id = "inst";
  std::string text;             // Inst
  std::string simplified_text;  // Inst'
  Vector inst_emb;              // E_T(Inst')
};

struct Store {
  DemoLibrary library;
  std::vector<QuerySample> queries;
  std::optional<InstructionRecord> instruction;
};

inline constexpr const char* kStoreFormat = "icdstore/v1";

Store load_store(const std::filesystem::path& path);
Store parse_store(const std::string& text);

// Throws InvalidArgument on an empty library and Error when unwritable.
void save_store(const Store& store, const std::filesystem::path& path);
std::string serialize_store(const Store& store);

// Index queries by id; throws FormatError on duplicates.
std::unordered_map<std::string, const QuerySample*> index_queries(
    const std::vector<QuerySample>& queries);

}  // namespace saber
