#pragma once

#include <filesystem>
#include <string>

#include "saber/model.hpp"

namespace saber {

inline constexpr const char* kCheckpointFormat = "saber-ckpt/v1";

struct CheckpointMeta {
  std::size_t library_size = 0;
  std::string library_digest;  // sha256 over the ordered demo ids
};

// Layout: one JSON header line
//   {"format":"saber-ckpt/v1","config":{...},"library_size":n,
//    "library_digest":"..","tensors":[{"name":..,"shape":[r,c],"decay":b},..]}
// followed by every tensor's row-major little-endian f32 data back to back.
std::string serialize_checkpoint(const model::Model& model, const CheckpointMeta& meta);
model::Model parse_checkpoint(const std::string& bytes, CheckpointMeta* meta = nullptr);

void save_checkpoint(const model::Model& model, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
model::Model load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

// Rounds every parameter to the nearest f32, the precision checkpoints keep.
void round_to_f32(ParamSet& params);

std::string library_digest(const DemoLibrary& library);

}  // namespace saber
