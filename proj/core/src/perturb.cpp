#include "saber/perturb.hpp"

#include <random>

#include <fmt/format.h>

#include "saber/error.hpp"

namespace saber::perturb {

Mode parse_mode(const std::string& name) {
  if (name == "standard") return Mode::standard;
  if (name == "random-q") return Mode::random_q;
  if (name == "random-r") return Mode::random_r;
  if (name == "dislocation-q") return Mode::dislocation_q;
  if (name == "dislocation-r") return Mode::dislocation_r;
  throw ConfigError("unknown perturbation mode '" + name + "'");
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::standard:
      return "standard";
    case Mode::random_q:
      return "random-q";
    case Mode::random_r:
      return "random-r";
    case Mode::dislocation_q:
      return "dislocation-q";
    case Mode::dislocation_r:
      return "dislocation-r";
  }
  return "standard";
}

Triplet triplet_of(const DemoRecord& rec) { return {rec.id, rec.image_ref, rec.text_q, rec.text_r}; }

std::vector<Triplet> perturb_sequence(std::span<const Triplet> seq, Mode mode, std::uint64_t seed,
                                      const std::string& caption) {
  std::vector<Triplet> out(seq.begin(), seq.end());
  switch (mode) {
    case Mode::standard:
      break;
    case Mode::random_q:
    case Mode::random_r: {
      if (seq.size() < 2) {
        throw InvalidArgument(fmt::format("{} needs at least 2 demonstrations, got {}",
                                          to_string(mode), seq.size()));
      }
      std::mt19937_64 rng(seed);
      const auto donor = std::uniform_int_distribution<std::size_t>(0, seq.size() - 1)(rng);
      for (auto& t : out) {
        if (mode == Mode::random_q) {
          t.q = seq[donor].q;
        } else {
          t.r = seq[donor].r;
        }
      }
      break;
    }
    case Mode::dislocation_q:
      for (auto& t : out) t.q = caption;
      break;
    case Mode::dislocation_r:
      for (auto& t : out) t.r = caption;
      break;
  }
  return out;
}

std::vector<DemoRecord> apply(std::span<const Triplet> seq, const DemoLibrary& library) {
  std::vector<DemoRecord> out;
  for (const auto& t : seq) {
    DemoRecord rec = library.get(t.id);
    rec.image_ref = t.image_ref;
    rec.text_q = t.q;
    rec.text_r = t.r;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace saber::perturb
