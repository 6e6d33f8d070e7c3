#include "saber/config.hpp"

#include <cstdlib>

#include <fmt/format.h>

#include "saber/error.hpp"
#include "saber/hashing.hpp"

namespace saber {

namespace {

nlohmann::json make_defaults() {
  return nlohmann::json::parse(R"({
    "seed": 0,
    "parallelism": 1,
    "store": {"source": "", "split": "", "eval": "", "dataset": "", "checkpoint": "",
              "generated": "", "report": ""},
    "synth": {"demos": 320, "queries": 32, "tasks": 4, "families": 6, "dim": 128,
              "img_task": 0.5, "img_family": 1.0, "img_noise": 0.6,
              "q_task": 1.0, "q_family": 0.7, "q_noise": 0.5, "r_noise": 0.5,
              "qr_q": 0.6, "qr_r": 0.8, "qr_noise": 0.3},
    "cluster": {"k": 8, "m": 4},
    "forge": {"N": 4, "cand": 0, "beam": 0},
    "fusion": {"mode": "binary", "elementwise_gate": false, "ternary_theta": 0.9},
    "model": {"n_layers": 4, "n_heads": 8, "task_layers": [1, 3], "alpha_init": 1.0,
              "max_seq": 0, "t_floor": 1e-6, "init_std": 0.02},
    "loss": {"lambda1": 0.1, "lambda2": 0.0001, "ternary": 1.0},
    "train": {"lr": 0.0001, "batch": 128, "epochs": 20, "beta1": 0.9, "beta2": 0.999,
              "eps": 1e-8, "weight_decay": 0.01, "t0": 5.0, "t_mult": 2.0},
    "gen": {"n": 4, "decode": "greedy", "top_k": 5, "temperature": 1.0},
    "scorer": {"backend": "oracle", "endpoint": "", "timeout_ms": 120000, "retries": 3,
               "oracle": {"w_match": 1.0, "w_sim": 0.5, "w_red": 0.5, "w_pos": 0.1}},
    "compare": {"methods": ["SabER", "RS", "I2I", "IQ2IQ-AMS", "IQ2IQ-JES", "IQPR"],
                "gap_trials": 4},
    "prompt": {"template": "generic", "templates": {}},
    "perturb": {"mode": "standard", "caption": "Give a short caption of the whole picture."}
  })");
}

// Integer slots reject fractional values; real slots accept integers.
bool same_kind(const nlohmann::json& a, const nlohmann::json& b) {
  if (a.is_number_integer()) return b.is_number_integer();
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

// Free-form sections whose children are not validated against defaults.
bool open_section(const std::string& path) { return path == "prompt.templates"; }

void merge_into(nlohmann::json& dst, const nlohmann::json& src, const std::string& prefix) {
  if (!src.is_object()) throw ConfigError("config: expected an object at '" + prefix + "'");
  for (const auto& [key, value] : src.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!dst.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    nlohmann::json& slot = dst[key];
    if (open_section(path)) {
      if (!value.is_object()) throw ConfigError("config: '" + path + "' must be an object");
      slot.update(value);
    } else if (slot.is_object()) {
      merge_into(slot, value, path);
    } else {
      if (!same_kind(slot, value)) {
        throw ConfigError(fmt::format("config: '{}' expects a {}, got {}", path, slot.type_name(),
                                      value.type_name()));
      }
      slot = value;
    }
  }
}

template <typename T>
T get(const nlohmann::json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("config: {}.{}: {}", section, key, e.what()));
  }
}

}  // namespace

const nlohmann::json& RunConfig::defaults() {
  static const nlohmann::json d = make_defaults();
  return d;
}

RunConfig::RunConfig() : j_(defaults()) {}

void RunConfig::merge(const nlohmann::json& j) { merge_into(j_, j, ""); }

void RunConfig::merge_file(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("config file '{}': {}", path.string(), e.what()));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  merge(j);
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  nlohmann::json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest.erase(0, pos + 1)) {
    parts.push_back(rest.substr(0, pos));
  }
  parts.push_back(rest);
  // A string slot accepts any literal verbatim (e.g. --set store.split=123).
  const nlohmann::json* slot = &j_;
  for (const auto& p : parts) {
    if (!slot->is_object() || !slot->contains(p)) {
      slot = nullptr;
      break;
    }
    slot = &slot->at(p);
  }
  if (slot != nullptr && slot->is_string() && !patch.is_string()) patch = raw;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = nlohmann::json{{*it, patch}};
  merge(patch);
}

void RunConfig::apply_env() {
  if (const char* ep = std::getenv(kScorerEndpointEnv); ep != nullptr && *ep != '\0') {
    j_["scorer"]["endpoint"] = ep;
  }
}

void RunConfig::set_seed(std::uint64_t seed) { j_["seed"] = seed; }

std::uint64_t RunConfig::seed() const { return j_.at("seed").get<std::uint64_t>(); }

std::string RunConfig::hash() const { return sha256_hex(j_.dump()); }

synth::SynthConfig RunConfig::synth() const {
  synth::SynthConfig c;
  const auto& s = j_.at("synth");
  c.demos = s.at("demos");
  c.queries = s.at("queries");
  c.tasks = s.at("tasks");
  c.families = s.at("families");
  c.dim = s.at("dim");
  c.img_task = s.at("img_task");
  c.img_family = s.at("img_family");
  c.img_noise = s.at("img_noise");
  c.q_task = s.at("q_task");
  c.q_family = s.at("q_family");
  c.q_noise = s.at("q_noise");
  c.r_noise = s.at("r_noise");
  c.qr_q = s.at("qr_q");
  c.qr_r = s.at("qr_r");
  c.qr_noise = s.at("qr_noise");
  c.seed = derive_seed(seed(), "synth");
  c.validate();
  return c;
}

forge::ForgeConfig RunConfig::forge() const {
  forge::ForgeConfig c;
  c.k = get<int>(j_, "cluster", "k");
  c.m = get<int>(j_, "cluster", "m");
  c.shots = get<int>(j_, "forge", "N");
  c.cand = get<int>(j_, "forge", "cand");
  c.beam = get<int>(j_, "forge", "beam");
  c.parallelism = j_.at("parallelism").get<int>();
  c.seed = derive_seed(seed(), "forge");
  c.validate();
  return c;
}

model::ModelConfig RunConfig::model(int d) const {
  model::ModelConfig c;
  c.d = d;
  c.n_layers = get<int>(j_, "model", "n_layers");
  c.n_heads = get<int>(j_, "model", "n_heads");
  c.task_layers = get<std::vector<int>>(j_, "model", "task_layers");
  c.alpha_init = get<double>(j_, "model", "alpha_init");
  c.t_floor = get<double>(j_, "model", "t_floor");
  c.init_std = get<double>(j_, "model", "init_std");
  c.max_seq = get<int>(j_, "model", "max_seq");
  if (c.max_seq == 0) {
    // Room for generating more shots than were trained on.
    c.max_seq = std::max({get<int>(j_, "forge", "N"), get<int>(j_, "gen", "n"), 8}) + 3;
  }
  c.fusion.mode = fusion::parse_mode(get<std::string>(j_, "fusion", "mode"));
  c.fusion.elementwise_gate = get<bool>(j_, "fusion", "elementwise_gate");
  c.fusion.ternary_theta = get<double>(j_, "fusion", "ternary_theta");
  c.validate();
  return c;
}

training::TrainConfig RunConfig::train() const {
  training::TrainConfig c;
  c.lr = get<double>(j_, "train", "lr");
  c.batch = get<int>(j_, "train", "batch");
  c.epochs = get<int>(j_, "train", "epochs");
  c.beta1 = get<double>(j_, "train", "beta1");
  c.beta2 = get<double>(j_, "train", "beta2");
  c.eps = get<double>(j_, "train", "eps");
  c.weight_decay = get<double>(j_, "train", "weight_decay");
  c.t0 = get<double>(j_, "train", "t0");
  c.t_mult = get<double>(j_, "train", "t_mult");
  c.seed = derive_seed(seed(), "train");
  c.validate();
  return c;
}

training::LossWeights RunConfig::loss() const {
  training::LossWeights w;
  w.lambda1 = get<double>(j_, "loss", "lambda1");
  w.lambda2 = get<double>(j_, "loss", "lambda2");
  w.ternary = get<double>(j_, "loss", "ternary");
  w.validate();
  return w;
}

inference::GenConfig RunConfig::gen() const {
  inference::GenConfig c;
  c.n = get<int>(j_, "gen", "n");
  c.decode = inference::parse_decode(get<std::string>(j_, "gen", "decode"));
  c.top_k = get<int>(j_, "gen", "top_k");
  c.temperature = get<double>(j_, "gen", "temperature");
  c.seed = derive_seed(seed(), "generate");
  c.validate();
  return c;
}

OracleConfig RunConfig::oracle() const {
  const auto& o = j_.at("scorer").at("oracle");
  return {o.at("w_match"), o.at("w_sim"), o.at("w_red"), o.at("w_pos")};
}

RemoteOptions RunConfig::remote() const {
  RemoteOptions o;
  o.endpoint = get<std::string>(j_, "scorer", "endpoint");
  o.timeout = std::chrono::milliseconds(get<long>(j_, "scorer", "timeout_ms"));
  o.retries = get<int>(j_, "scorer", "retries");
  return o;
}

std::string RunConfig::scorer_backend() const {
  auto b = get<std::string>(j_, "scorer", "backend");
  if (b != "oracle" && b != "remote") {
    throw ConfigError("scorer.backend must be oracle or remote, got '" + b + "'");
  }
  return b;
}

std::filesystem::path RunConfig::path(const std::string& key, const std::filesystem::path& out_dir,
                                      const std::string& fallback) const {
  const auto v = get<std::string>(j_, "store", key.c_str());
  return v.empty() ? out_dir / fallback : std::filesystem::path(v);
}

}  // namespace saber
