#include "saber/pipeline.hpp"

#include <chrono>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "saber/baselines.hpp"
#include "saber/checkpoint.hpp"
#include "saber/dataset_io.hpp"
#include "saber/error.hpp"
#include "saber/forge.hpp"
#include "saber/hashing.hpp"
#include "saber/inference.hpp"
#include "saber/perturb.hpp"
#include "saber/prompt.hpp"
#include "saber/remote_scorer.hpp"
#include "saber/synth.hpp"
#include "saber/training.hpp"

namespace saber::pipeline {

namespace {

using nlohmann::json;

fs::path or_default(const RunConfig& cfg, const char* key, const fs::path& out, const char* name) {
  return cfg.path(key, out, name);
}

void write_manifest(const RunConfig& cfg, const std::string& stage, const fs::path& primary,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
  json in = json::object();
  for (const auto& p : inputs) in[p.filename().string()] = sha256_file(p);
  json outj = json::object();
  for (const auto& p : outputs) outj[p.filename().string()] = sha256_file(p);
  json m = {{"stage", stage},
            {"config_sha256", cfg.hash()},
            {"config", cfg.tree()},
            {"seed", cfg.seed()},
            {"stage_seed", derive_seed(cfg.seed(), stage)},
            {"inputs", in},
            {"outputs", outj}};
  fs::path path = primary;
  path += ".manifest.json";
  write_file(path, m.dump(2) + "\n");
}

InstructionRecord instruction_of(const Store& store) {
  if (!store.instruction) throw InvalidArgument("store has no instruction record");
  return *store.instruction;
}

prompt::PromptTemplate prompt_template(const RunConfig& cfg) {
  const auto& p = cfg.tree().at("prompt");
  const auto name = p.at("template").get<std::string>();
  if (p.at("templates").contains(name)) {
    return prompt::template_from_json(name, p.at("templates").at(name));
  }
  return prompt::builtin_template(name);
}

std::string generated_file(const std::string& method, int n,
                           const std::vector<SequenceExample>& seqs, const Store& store,
                           const RunConfig& cfg) {
  std::string out = json{{"format", kGeneratedFormat}, {"method", method}, {"n", n}}.dump() + "\n";
  const auto tpl = prompt_template(cfg);
  const std::string inst = store.instruction ? store.instruction->text : "";
  const auto queries = index_queries(store.queries);
  for (const auto& s : seqs) {
    json line = {{"query", s.query_id}, {"icds", s.icd_ids}, {"score", s.score}};
    std::vector<const DemoRecord*> icds;
    for (const auto& id : s.icd_ids) icds.push_back(&store.library.get(id));
    try {
      line["prompt"] = prompt::assemble_prompt(inst, icds, *queries.at(s.query_id), tpl);
    } catch (const InvalidArgument&) {
      // Stores without text fields still get their sequences written.
    }
    out += line.dump() + "\n";
  }
  return out;
}

std::vector<SequenceExample> parse_generated(const std::string& text) {
  std::vector<SequenceExample> out;
  std::size_t start = 0;
  bool header = false;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const auto line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    const auto j = json::parse(line);
    if (!header) {
      if (j.value("format", "") != kGeneratedFormat) {
        throw FormatError(fmt::format("expected a {} file", kGeneratedFormat));
      }
      header = true;
      continue;
    }
    out.push_back({j.at("query"), j.at("icds").get<std::vector<std::string>>(), j.at("score")});
  }
  return out;
}

std::vector<const QuerySample*> sorted_queries(const Store& store) {
  std::vector<const QuerySample*> qs;
  for (const auto& q : store.queries) qs.push_back(&q);
  std::sort(qs.begin(), qs.end(), [](auto* a, auto* b) { return a->id < b->id; });
  return qs;
}

}  // namespace

Paths Paths::resolve(const RunConfig& cfg, const fs::path& out) {
  Paths p;
  p.source = or_default(cfg, "source", out, "synth.icdstore");
  p.split = or_default(cfg, "split", out, "split.icdstore");
  p.eval = or_default(cfg, "eval", out, "eval.icdstore");
  p.dataset = or_default(cfg, "dataset", out, "dataset.jsonl");
  p.checkpoint = or_default(cfg, "checkpoint", out, "model.ckpt");
  p.train_log = out / "train_log.jsonl";
  p.generated = or_default(cfg, "generated", out, "generated.jsonl");
  p.report = or_default(cfg, "report", out, "report.json");
  p.report_text = p.report;
  p.report_text.replace_extension(".txt");
  return p;
}

std::unique_ptr<Scorer> make_scorer(const RunConfig& cfg, const Store& store) {
  if (cfg.scorer_backend() == "remote") {
    auto opts = cfg.remote();
    if (opts.endpoint.empty()) {
      throw ConfigError(fmt::format("scorer.backend=remote needs scorer.endpoint or {}",
                                    kScorerEndpointEnv));
    }
    return std::make_unique<RemoteScorer>(opts);
  }
  return std::make_unique<OracleScorer>(store.library, store.queries, cfg.oracle());
}

fs::path run_synth(const RunConfig& cfg, const fs::path& out) {
  const auto paths = Paths::resolve(cfg, out);
  const Store store = synth::generate(cfg.synth());
  save_store(store, paths.source);
  spdlog::info("synth: {} demos, {} held-out queries -> {}", store.library.size(),
               store.queries.size(), paths.source.string());
  write_manifest(cfg, "synth", paths.source, {}, {paths.source});
  return paths.source;
}

void run_cluster(const RunConfig& cfg, const fs::path& out) {
  const auto paths = Paths::resolve(cfg, out);
  const Store source = load_store(paths.source);
  const auto fc = cfg.forge();
  Store held_out;
  held_out.queries = source.queries;
  Store input;
  input.library = source.library;
  input.instruction = source.instruction;
  auto split = forge::select_query_set(input, fc.k, fc.m, derive_seed(cfg.seed(), "cluster"));
  Store eval;
  eval.library = split.store.library;
  eval.queries = held_out.queries;
  eval.instruction = split.store.instruction;
  save_store(split.store, paths.split);
  save_store(eval, paths.eval);
  spdlog::info("cluster: k={} m={} -> {} queries, DL {}; {} held-out queries", fc.k, fc.m,
               split.store.queries.size(), split.store.library.size(), eval.queries.size());
  write_manifest(cfg, "cluster", paths.split, {paths.source}, {paths.split, paths.eval});
}

fs::path run_forge(const RunConfig& cfg, const fs::path& out) {
  const auto paths = Paths::resolve(cfg, out);
  const Store store = load_store(paths.split);
  auto scorer = make_scorer(cfg, store);
  forge::SearchStats stats;
  const auto ds = forge::build_dataset(store.library, store.queries, *scorer, cfg.forge(), &stats);
  save_dataset(ds, paths.dataset);
  write_manifest(cfg, "forge", paths.dataset, {paths.split}, {paths.dataset});
  return paths.dataset;
}

fs::path run_train(const RunConfig& cfg, const fs::path& out) {
  const auto paths = Paths::resolve(cfg, out);
  const Store store = load_store(paths.split);
  const Dataset ds = load_dataset(paths.dataset);
  model::Model m(cfg.model(static_cast<int>(store.library.dim())), store.library.size(),
                 derive_seed(cfg.seed(), "init"));
  auto tc = cfg.train();
  std::string log;
  tc.on_epoch = [&](const training::EpochLog& e) {
    log += training::to_json(e).dump() + "\n";
    spdlog::info("train: epoch {} ce {:.4f} sparse {:.4f} lr {:.2e}", e.epoch, e.ce, e.sparse,
                 e.lr);
  };
  training::fit(m, ds, store.library, store.queries, instruction_of(store), tc, cfg.loss());
  save_checkpoint(m, {store.library.size(), library_digest(store.library)}, paths.checkpoint);
  write_file(paths.train_log, log);
  write_manifest(cfg, "train", paths.checkpoint, {paths.split, paths.dataset},
                 {paths.checkpoint, paths.train_log});
  return paths.checkpoint;
}

compare::Method make_method(const std::string& name, const RunConfig& cfg, const Store& store,
                            model::Model* model) {
  const int n = cfg.gen().n;
  const DemoLibrary& lib = store.library;
  if (name == "SabER") {
    if (model == nullptr) throw InvalidArgument("SabER method needs a trained model");
    auto mats = std::make_shared<fusion::LibraryMatrices>(fusion::LibraryMatrices::from(lib));
    const auto inst = instruction_of(store);
    const auto gc = cfg.gen();
    return {name, [model, mats, inst, gc, &lib](const QuerySample& q) {
              return inference::generate_sequence(*model, lib, *mats, q, inst, gc).icd_ids;
            }};
  }
  if (name == "RS") {
    const auto seed = derive_seed(cfg.seed(), "rs");
    return {name, [&lib, n, seed](const QuerySample& q) {
              return baselines::retrieve_rs(lib, n, derive_seed(seed, q.id));
            }};
  }
  if (name == "I2I") {
    return {name, [&lib, n](const QuerySample& q) { return baselines::retrieve_i2i(q, lib, n); }};
  }
  if (name == "IQ2IQ-AMS" || name == "IQ2IQ-JES") {
    const auto s = name == "IQ2IQ-AMS" ? baselines::Strategy::ams : baselines::Strategy::jes;
    return {name, [&lib, n, s](const QuerySample& q) {
              return baselines::retrieve_iq2iq(q, lib, n, s);
            }};
  }
  if (name == "IQPR") {
    return {name, [&lib, n](const QuerySample& q) { return baselines::retrieve_iqpr(q, lib, n); }};
  }
  throw ConfigError("unknown method '" + name + "'");
}

fs::path run_generate(const RunConfig& cfg, const fs::path& out) {
  const auto paths = Paths::resolve(cfg, out);
  const Store store = load_store(paths.eval);
  CheckpointMeta meta;
  model::Model m = load_checkpoint(paths.checkpoint, &meta);
  if (meta.library_digest != library_digest(store.library)) {
    throw InvalidArgument("checkpoint was trained on a different demonstration library");
  }
  const auto mats = fusion::LibraryMatrices::from(store.library);
  const auto inst = instruction_of(store);
  std::vector<SequenceExample> seqs;
  for (const QuerySample* q : sorted_queries(store)) {
    seqs.push_back(inference::generate_sequence(m, store.library, mats, *q, inst, cfg.gen()));
  }
  write_file(paths.generated, generated_file("SabER", cfg.gen().n, seqs, store, cfg));
  write_manifest(cfg, "generate", paths.generated, {paths.eval, paths.checkpoint},
                 {paths.generated});
  return paths.generated;
}

fs::path run_baseline(const RunConfig& cfg, const fs::path& out, const std::string& method) {
  const auto paths = Paths::resolve(cfg, out);
  const Store store = load_store(paths.eval);
  const auto mth = make_method(method, cfg, store, nullptr);
  std::vector<SequenceExample> seqs;
  for (const QuerySample* q : sorted_queries(store)) seqs.push_back({q->id, mth.retrieve(*q), 0.0});
  const fs::path target = out / fmt::format("baseline-{}.jsonl", method);
  write_file(target, generated_file(method, cfg.gen().n, seqs, store, cfg));
  write_manifest(cfg, "baseline", target, {paths.eval}, {target});
  return target;
}

compare::Report run_compare(const RunConfig& cfg, const fs::path& out) {
  const auto paths = Paths::resolve(cfg, out);
  const Store store = load_store(paths.eval);
  auto scorer = make_scorer(cfg, store);
  const auto names = cfg.tree().at("compare").at("methods").get<std::vector<std::string>>();
  std::optional<model::Model> model;
  std::vector<fs::path> inputs{paths.eval};
  if (std::find(names.begin(), names.end(), "SabER") != names.end()) {
    CheckpointMeta meta;
    model.emplace(load_checkpoint(paths.checkpoint, &meta));
    if (meta.library_digest != library_digest(store.library)) {
      throw InvalidArgument("checkpoint was trained on a different demonstration library");
    }
    inputs.push_back(paths.checkpoint);
  }
  std::vector<compare::Method> methods;
  for (const auto& name : names) {
    methods.push_back(make_method(name, cfg, store, model ? &*model : nullptr));
  }
  auto report =
      compare::compare_methods(store.queries, methods, *scorer, derive_seed(cfg.seed(), "compare"),
                               cfg.tree().at("compare").at("gap_trials").get<int>());
  write_file(paths.report, compare::report_to_json(report).dump(2) + "\n");
  write_file(paths.report_text, compare::report_to_text(report));
  write_manifest(cfg, "compare", paths.report, inputs, {paths.report, paths.report_text});
  return report;
}

fs::path run_perturb(const RunConfig& cfg, const fs::path& out) {
  const auto paths = Paths::resolve(cfg, out);
  const Store store = load_store(paths.eval);
  const auto seqs = parse_generated(read_file(paths.generated));
  const auto mode = perturb::parse_mode(cfg.tree().at("perturb").at("mode").get<std::string>());
  const auto caption = cfg.tree().at("perturb").at("caption").get<std::string>();
  const auto tpl = prompt_template(cfg);
  const auto queries = index_queries(store.queries);
  const std::string inst = store.instruction ? store.instruction->text : "";
  const auto seed = derive_seed(cfg.seed(), "perturb");
  std::string text = json{{"format", "saber-perturb/v1"}, {"mode", perturb::to_string(mode)}}.dump() + "\n";
  for (const auto& s : seqs) {
    std::vector<perturb::Triplet> trip;
    for (const auto& id : s.icd_ids) trip.push_back(perturb::triplet_of(store.library.get(id)));
    const auto changed = perturb::perturb_sequence(trip, mode, derive_seed(seed, s.query_id), caption);
    const auto recs = perturb::apply(changed, store.library);
    std::vector<const DemoRecord*> ptrs;
    for (const auto& r : recs) ptrs.push_back(&r);
    json line = {{"query", s.query_id}, {"icds", s.icd_ids}};
    line["prompt"] = prompt::assemble_prompt(inst, ptrs, *queries.at(s.query_id), tpl);
    text += line.dump() + "\n";
  }
  const fs::path target = out / fmt::format("perturbed-{}.jsonl", perturb::to_string(mode));
  write_file(target, text);
  write_manifest(cfg, "perturb", target, {paths.eval, paths.generated}, {target});
  return target;
}

compare::Report end_to_end(const RunConfig& cfg, const fs::path& out) {
  auto stage = [](const char* name, auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (const Error& e) {
      throw Error(fmt::format("stage '{}' failed: {}", name, e.what()));
    }
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    spdlog::info("stage {} done in {:.2f} s", name, dt.count());
  };
  fs::create_directories(out);
  compare::Report report;
  stage("synth", [&] { run_synth(cfg, out); });
  stage("cluster", [&] { run_cluster(cfg, out); });
  stage("forge", [&] { run_forge(cfg, out); });
  stage("train", [&] { run_train(cfg, out); });
  stage("generate", [&] { run_generate(cfg, out); });
  stage("compare", [&] { report = run_compare(cfg, out); });
  return report;
}

}  // namespace saber::pipeline
