#include "saber/synth.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "saber/error.hpp"

namespace saber::synth {

namespace {

using Dense = std::vector<double>;

const char* const kTaskNames[] = {"vqa", "caption", "classify", "count",
                                  "ocr", "grounding", "reasoning", "retrieval"};

std::string task_name(int t) {
  return t < 8 ? kTaskNames[t] : fmt::format("task{}", t);
}

class Gen {
 public:
  Gen(int dim, std::uint64_t seed) : dim_(dim), rng_(seed) {}

  Dense gaussian() {
    std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(dim_)));
    Dense v(static_cast<std::size_t>(dim_));
    for (auto& x : v) x = nd(rng_);
    return v;
  }
  Dense direction() { return normalized(gaussian()); }

  // normalize(Σ w_k·v_k + noise·ε)
  Vector mix(std::initializer_list<std::pair<double, const Dense*>> parts, double noise) {
    Dense acc = gaussian();
    for (auto& x : acc) x *= noise;
    for (const auto& [w, v] : parts) {
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * (*v)[i];
    }
    acc = normalized(acc);
    return Vector(acc.begin(), acc.end());
  }

  static Dense normalized(Dense v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    return v;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  int dim_;
  std::mt19937_64 rng_;
};

Dense to_dense(const Vector& v) { return Dense(v.begin(), v.end()); }

}  // namespace

void SynthConfig::validate() const {
  if (demos < 1 || queries < 0 || tasks < 1 || families < 1 || dim < 2) {
    throw ConfigError("synth: demos, tasks, families >= 1, queries >= 0, dim >= 2");
  }
}

Store generate(const SynthConfig& cfg) {
  cfg.validate();
  Gen g(cfg.dim, cfg.seed);
  struct Family {
    Dense img, q, r;
  };
  std::vector<Dense> img_task, q_task;
  std::vector<std::vector<Family>> fam(static_cast<std::size_t>(cfg.tasks));
  for (int t = 0; t < cfg.tasks; ++t) {
    img_task.push_back(g.direction());
    q_task.push_back(g.direction());
    for (int f = 0; f < cfg.families; ++f) {
      fam[static_cast<std::size_t>(t)].push_back({g.direction(), g.direction(), g.direction()});
    }
  }

  Store store;
  store.library = DemoLibrary(static_cast<std::size_t>(cfg.dim));
  const int total = cfg.demos + cfg.queries;
  for (int i = 0; i < total; ++i) {
    // Round-robin over tasks and families keeps the planted classes balanced.
    const int t = i % cfg.tasks;
    const int f = (i / cfg.tasks) % cfg.families;
    const Family& F = fam[static_cast<std::size_t>(t)][static_cast<std::size_t>(f)];
    const auto& T_img = img_task[static_cast<std::size_t>(t)];
    const auto& T_q = q_task[static_cast<std::size_t>(t)];
    Vector img = g.mix({{cfg.img_task, &T_img}, {cfg.img_family, &F.img}}, cfg.img_noise);
    Vector q = g.mix({{cfg.q_task, &T_q}, {cfg.q_family, &F.q}}, cfg.q_noise);
    Vector r = g.mix({{1.0, &F.r}}, cfg.r_noise);
    const Dense qd = to_dense(q);
    const Dense rd = to_dense(r);
    Vector qr = g.mix({{cfg.qr_q, &qd}, {cfg.qr_r, &rd}}, cfg.qr_noise);

    const std::string task = task_name(t);
    const std::string answer = fmt::format("{}-answer-{}", task, f);
    const std::string question = fmt::format("{} question {} of family {}", task, i, f);
    if (i < cfg.demos) {
      DemoRecord rec;
      rec.id = fmt::format("d{:05d}", i);
      rec.task_tag = task;
      rec.img = std::move(img);
      rec.q = std::move(q);
      rec.r = std::move(r);
      rec.qr = std::move(qr);
      rec.text_q = question;
      rec.text_r = answer;
      rec.image_ref = fmt::format("images/{}.jpg", rec.id);
      store.library.add(std::move(rec));
    } else {
      QuerySample qs;
      qs.id = fmt::format("q{:05d}", i - cfg.demos);
      qs.task_tag = task;
      qs.img = std::move(img);
      qs.q = std::move(q);
      qs.gt_result = answer;
      qs.text_q = question;
      qs.image_ref = fmt::format("images/{}.jpg", qs.id);
      // A pseudo result from an imperfect first pass: right family half the time.
      std::bernoulli_distribution right(0.5);
      std::uniform_int_distribution<int> any_f(0, cfg.families - 1);
      const int pf = right(g.rng()) ? f : any_f(g.rng());
      qs.pseudo_r = g.mix({{1.0, &fam[static_cast<std::size_t>(t)][static_cast<std::size_t>(pf)].r}},
                          cfg.r_noise);
      store.queries.push_back(std::move(qs));
    }
  }

  InstructionRecord inst;
  inst.text =
      "Study the image-text examples to work out the task, then answer the question about the "
      "new image.";
  inst.simplified_text = "Infer the task from the examples and answer the new question.";
  Dense mean(static_cast<std::size_t>(cfg.dim), 0.0);
  for (const auto& v : q_task) {
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
  }
  inst.inst_emb = g.mix({{1.0 / cfg.tasks, &mean}}, 0.3);
  store.instruction = std::move(inst);
  return store;
}

}  // namespace saber::synth
