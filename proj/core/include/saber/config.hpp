#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saber/forge.hpp"
#include "saber/inference.hpp"
#include "saber/model.hpp"
#include "saber/remote_scorer.hpp"
#include "saber/synth.hpp"
#include "saber/training.hpp"

namespace saber {

inline constexpr const char* kScorerEndpointEnv = "SABER_SCORER_ENDPOINT";

// Resolved run configuration. Precedence, lowest first: built-in defaults,
// config file, SABER_SCORER_ENDPOINT (scorer.endpoint only), --set
// overrides, --seed.
class RunConfig {
 public:
  RunConfig();  // defaults

  static const nlohmann::json& defaults();

  // Deep-merges a config file; unknown keys and type changes are rejected.
  void merge_file(const std::filesystem::path& path);
  void merge(const nlohmann::json& j);
  // "a.b.c=value"; value parsed as JSON when possible, else taken as a string.
  void apply_override(const std::string& assignment);
  void apply_env();
  void set_seed(std::uint64_t seed);

  const nlohmann::json& tree() const { return j_; }
  std::uint64_t seed() const;
  std::string hash() const;  // sha256 of the canonical dump

  // Typed views. Stage seeds are derived from seed() by stage name.
  synth::SynthConfig synth() const;
  forge::ForgeConfig forge() const;
  model::ModelConfig model(int d) const;
  training::TrainConfig train() const;
  training::LossWeights loss() const;
  inference::GenConfig gen() const;
  OracleConfig oracle() const;
  RemoteOptions remote() const;
  std::string scorer_backend() const;

  // Artifact path for `key` under store.*, defaulting to out_dir/<fallback>.
  std::filesystem::path path(const std::string& key, const std::filesystem::path& out_dir,
                             const std::string& fallback) const;

 private:
  nlohmann::json j_;
};

}  // namespace saber
