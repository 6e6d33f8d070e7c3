#include "saber/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <fmt/format.h>

#include "saber/error.hpp"
#include "saber/hashing.hpp"

namespace saber {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

std::string serialize_checkpoint(const model::Model& model, const CheckpointMeta& meta) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : model.params()) {
    tensors.push_back({{"name", p.name},
                       {"shape", {p.value.rows(), p.value.cols()}},
                       {"decay", p.decay}});
  }
  nlohmann::json header = {{"format", kCheckpointFormat},
                           {"config", model::to_json(model.config())},
                           {"library_size", meta.library_size},
                           {"library_digest", meta.library_digest},
                           {"tensors", tensors}};
  std::string out = header.dump();
  out += '\n';
  for (const auto& p : model.params()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const float f = static_cast<float>(p.value.data()[i]);
      char buf[sizeof(float)];
      std::memcpy(buf, &f, sizeof f);
      out.append(buf, sizeof buf);
    }
  }
  return out;
}

model::Model parse_checkpoint(const std::string& bytes, CheckpointMeta* meta) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw FormatError("checkpoint: missing header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("checkpoint: malformed header: {}", e.what()));
  }
  if (header.value("format", "") != kCheckpointFormat) {
    throw FormatError(fmt::format("checkpoint: expected format '{}'", kCheckpointFormat));
  }
  model::ModelConfig cfg = model::model_config_from_json(header.at("config"));
  ParamSet params;
  std::size_t pos = nl + 1;
  for (const auto& t : header.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto rows = t.at("shape").at(0).get<Eigen::Index>();
    const auto cols = t.at("shape").at(1).get<Eigen::Index>();
    const auto count = static_cast<std::size_t>(rows * cols);
    if (pos + count * sizeof(float) > bytes.size()) {
      throw FormatError(fmt::format("checkpoint: truncated data for tensor '{}'", name));
    }
    ad::Mat m(rows, cols);
    for (std::size_t i = 0; i < count; ++i) {
      float f;
      std::memcpy(&f, bytes.data() + pos + i * sizeof(float), sizeof f);
      m.data()[i] = f;
    }
    pos += count * sizeof(float);
    params.add(name, std::move(m), t.value("decay", true));
  }
  if (pos != bytes.size()) throw FormatError("checkpoint: trailing bytes after last tensor");
  if (meta != nullptr) {
    meta->library_size = header.value("library_size", std::size_t{0});
    meta->library_digest = header.value("library_digest", std::string());
  }
  return model::Model(std::move(cfg), std::move(params));
}

void save_checkpoint(const model::Model& model, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(model, meta));
}

model::Model load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  return parse_checkpoint(read_file(path), meta);
}

void round_to_f32(ParamSet& params) {
  for (auto& p : params) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      p.value.data()[i] = static_cast<float>(p.value.data()[i]);
    }
  }
}

std::string library_digest(const DemoLibrary& library) {
  std::string ids;
  for (const auto& r : library) {
    ids += r.id;
    ids += '\n';
  }
  return sha256_hex(ids);
}

}  // namespace saber
