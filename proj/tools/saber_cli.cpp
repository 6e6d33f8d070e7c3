// saber: command-line front end over saber::pipeline.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <cstdio>
#include <deque>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "saber/config.hpp"
#include "saber/error.hpp"
#include "saber/fusion.hpp"
#include "saber/gradcheck.hpp"
#include "saber/pipeline.hpp"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "dotted-key override, key=value (repeatable)");
  cmd->add_option("--out", c.out, "artifact directory");
  cmd->add_option("--seed", c.seed, "run seed; stage seeds are derived from it");
  cmd->add_flag("-q,--quiet", c.quiet, "only log warnings");
}

saber::RunConfig resolve(const Common& c, const std::vector<std::string>& extra) {
  saber::RunConfig cfg;
  if (!c.config.empty()) cfg.merge_file(c.config);
  cfg.apply_env();
  for (const auto& s : extra) cfg.apply_override(s);
  for (const auto& s : c.sets) cfg.apply_override(s);
  if (c.seed) cfg.set_seed(*c.seed);
  return cfg;
}

// Flag-style shortcuts become overrides with --set precedence.
struct Shortcut {
  std::string key;
  std::string value;
};

std::vector<std::string> shortcut_overrides(const std::deque<Shortcut>& shortcuts) {
  std::vector<std::string> out;
  for (const auto& s : shortcuts) {
    if (!s.value.empty()) out.push_back(s.key + "=" + s.value);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SabER ICD selection and ordering"};
  app.require_subcommand(1);
  app.fallthrough(false);

  Common common;
  std::deque<Shortcut> shortcuts;  // options bind to element addresses
  auto shortcut = [&](CLI::App* cmd, const std::string& flag, const std::string& key,
                      const std::string& help) {
    shortcuts.push_back({key, ""});
    cmd->add_option(flag, shortcuts.back().value, help + " (" + key + ")");
  };

  auto* synth = app.add_subcommand("synth", "generate a seeded synthetic store");
  shortcut(synth, "--demos", "synth.demos", "library size");
  shortcut(synth, "--tasks", "synth.tasks", "planted tasks");
  shortcut(synth, "--queries", "synth.queries", "held-out queries");
  shortcut(synth, "--dim", "synth.dim", "vector dimension");
  auto* cluster = app.add_subcommand("cluster", "k-means the library and split off query sets");
  auto* forge = app.add_subcommand("forge", "build the sequence training dataset");
  auto* train = app.add_subcommand("train", "train the sequence model");
  auto* generate = app.add_subcommand("generate", "generate ICD sequences for held-out queries");
  shortcut(generate, "--n", "gen.n", "shots to generate");
  shortcut(generate, "--decode", "gen.decode", "greedy or top_k");
  auto* baseline = app.add_subcommand("baseline", "retrieve sequences with a baseline method");
  std::string method;
  baseline->add_option("--method", method, "RS, I2I, IQ2IQ-AMS, IQ2IQ-JES or IQPR")->required();
  shortcut(baseline, "--n", "gen.n", "shots to retrieve");
  auto* compare = app.add_subcommand("compare", "score every method on held-out queries");
  auto* perturb = app.add_subcommand("perturb", "render perturbed prompts for generated sequences");
  shortcut(perturb, "--mode", "perturb.mode",
           "standard, random-q, random-r, dislocation-q or dislocation-r");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check on a toy model");
  std::string gc_mode = "binary";
  gradcheck->add_option("--mode", gc_mode, "fusion mode")
      ->check(CLI::IsMember({"binary", "ternary", "concat"}));
  auto* e2e = app.add_subcommand("e2e", "synth, cluster, forge, train, generate and compare");

  for (auto* cmd : {synth, cluster, forge, train, generate, baseline, compare, perturb, gradcheck,
                    e2e}) {
    add_common(cmd, common);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (common.quiet) spdlog::set_level(spdlog::level::warn);
  spdlog::set_pattern("[%l] %v");

  saber::RunConfig cfg;
  try {
    cfg = resolve(common, shortcut_overrides(shortcuts));
  } catch (const saber::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }

  const std::filesystem::path out = common.out;
  try {
    std::filesystem::create_directories(out);
    if (synth->parsed()) {
      fmt::print("{}\n", saber::pipeline::run_synth(cfg, out).string());
    } else if (cluster->parsed()) {
      saber::pipeline::run_cluster(cfg, out);
    } else if (forge->parsed()) {
      fmt::print("{}\n", saber::pipeline::run_forge(cfg, out).string());
    } else if (train->parsed()) {
      fmt::print("{}\n", saber::pipeline::run_train(cfg, out).string());
    } else if (generate->parsed()) {
      fmt::print("{}\n", saber::pipeline::run_generate(cfg, out).string());
    } else if (baseline->parsed()) {
      fmt::print("{}\n", saber::pipeline::run_baseline(cfg, out, method).string());
    } else if (compare->parsed()) {
      const auto report = saber::pipeline::run_compare(cfg, out);
      std::cout << saber::compare::report_to_text(report);
    } else if (perturb->parsed()) {
      fmt::print("{}\n", saber::pipeline::run_perturb(cfg, out).string());
    } else if (gradcheck->parsed()) {
      const auto r = saber::toy_model_gradcheck(saber::fusion::parse_mode(gc_mode), cfg.seed());
      fmt::print("max rel err {:.3e} over {} coords (worst {})\n", r.max_rel_err, r.coords,
                 r.worst);
      return r.max_rel_err < 1e-3 ? 0 : 1;
    } else if (e2e->parsed()) {
      const auto report = saber::pipeline::end_to_end(cfg, out);
      std::cout << saber::compare::report_to_text(report);
    }
  } catch (const saber::ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
