#pragma once

// Reproducible stages over on-disk artifacts. Each stage writes its
// artifact(s) plus `<artifact>.manifest.json` recording the config hash, run
// seed, stage seed and sha256 of every input and output.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "saber/compare.hpp"
#include "saber/config.hpp"
#include "saber/scorer.hpp"

namespace saber::pipeline {

namespace fs = std::filesystem;

struct Paths {
  fs::path source, split, eval, dataset, checkpoint, train_log, generated, report, report_text;
  static Paths resolve(const RunConfig& cfg, const fs::path& out);
};

fs::path run_synth(const RunConfig& cfg, const fs::path& out);
// Writes the split store (DL + clustered query set) and the eval store
// (DL + the source's held-out queries).
void run_cluster(const RunConfig& cfg, const fs::path& out);
fs::path run_forge(const RunConfig& cfg, const fs::path& out);
fs::path run_train(const RunConfig& cfg, const fs::path& out);
fs::path run_generate(const RunConfig& cfg, const fs::path& out);
fs::path run_baseline(const RunConfig& cfg, const fs::path& out, const std::string& method);
compare::Report run_compare(const RunConfig& cfg, const fs::path& out);
fs::path run_perturb(const RunConfig& cfg, const fs::path& out);

// synth → cluster → forge → train → generate → compare. A failing stage is
// rethrown as Error prefixed with the stage name.
compare::Report end_to_end(const RunConfig& cfg, const fs::path& out);

// Oracle over the given store, or the remote client when configured.
std::unique_ptr<Scorer> make_scorer(const RunConfig& cfg, const Store& store);

// Retrieval method by report name: SabER (needs `model`), RS, I2I, IQ2IQ-AMS,
// IQ2IQ-JES, IQPR.
compare::Method make_method(const std::string& name, const RunConfig& cfg, const Store& store,
                            model::Model* model);

inline constexpr const char* kGeneratedFormat = "saber-gen/v1";

}  // namespace saber::pipeline
