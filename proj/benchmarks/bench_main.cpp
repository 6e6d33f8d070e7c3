#include <benchmark/benchmark.h>

#include "saber/forge.hpp"
#include "saber/inference.hpp"
#include "saber/scorer.hpp"
#include "saber/synth.hpp"
#include "saber/training.hpp"

namespace {

using namespace saber;

// Default-sized synthetic store, built once.
const Store& store() {
  static const Store s = [] {
    synth::SynthConfig c;
    c.seed = 17;
    return synth::generate(c);
  }();
  return s;
}

model::Model make_model(int d) {
  model::ModelConfig cfg;
  cfg.d = d;
  cfg.max_seq = 11;
  return model::Model(cfg, store().library.size(), 3);
}

void BM_Forward(benchmark::State& state) {
  const int shots = static_cast<int>(state.range(0));
  model::Model m = make_model(static_cast<int>(store().library.dim()));
  const auto mats = fusion::LibraryMatrices::from(store().library);
  const auto& q = store().queries.front();
  std::vector<int> icds;
  for (int i = 0; i < shots; ++i) icds.push_back(i * 7);
  for (auto _ : state) {
    ad::Tape t;
    auto& ps = m.params();
    auto table = fusion::demo_table(t, ps, m.config().fusion, mats);
    auto tg = fusion::init_task_guider(t, ps, q, &*store().instruction);
    auto seq = fusion::assemble_sequence(t, ps, fusion::embed_query(t, ps, m.config().fusion, q),
                                         table, icds, true);
    auto out = m.forward(t, seq, table, tg);
    benchmark::DoNotOptimize(out.logits.value().data());
  }
}
BENCHMARK(BM_Forward)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMicrosecond);

void BM_SequenceLossBackward(benchmark::State& state) {
  model::Model m = make_model(static_cast<int>(store().library.dim()));
  const auto mats = fusion::LibraryMatrices::from(store().library);
  const auto& q = store().queries.front();
  const std::vector<int> icds{3, 14, 15, 92};
  for (auto _ : state) {
    m.params().zero_grad();
    ad::Tape t;
    auto ctx = training::make_context(t, m, mats);
    auto parts = training::sequence_loss(t, m, ctx, q, *store().instruction, icds, {});
    t.backward(parts.total);
    benchmark::DoNotOptimize(parts.total.scalar());
  }
}
BENCHMARK(BM_SequenceLossBackward)->Unit(benchmark::kMillisecond);

void BM_OracleScore(benchmark::State& state) {
  OracleScorer scorer(store().library, store().queries);
  ScoreRequest req{store().queries.front().id, {}};
  for (int i = 0; i < state.range(0); ++i) req.icd_ids.push_back(store().library.at(i * 5).id);
  for (auto _ : state) benchmark::DoNotOptimize(scorer.score(req));
}
BENCHMARK(BM_OracleScore)->Arg(4)->Arg(8);

void BM_BeamSearch(benchmark::State& state) {
  OracleScorer scorer(store().library, store().queries);
  std::vector<std::string> cands;
  for (int i = 0; i < state.range(0); ++i) cands.push_back(store().library.at(i).id);
  for (auto _ : state) {
    auto out = forge::beam_search(store().queries.front().id, cands, 4, 4, scorer);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_BeamSearch)->Arg(32)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_GenerateGreedy(benchmark::State& state) {
  model::Model m = make_model(static_cast<int>(store().library.dim()));
  const auto mats = fusion::LibraryMatrices::from(store().library);
  inference::GenConfig gc;
  gc.n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto seq = inference::generate_sequence(m, store().library, mats, store().queries.front(),
                                            *store().instruction, gc);
    benchmark::DoNotOptimize(seq.icd_ids.data());
  }
}
BENCHMARK(BM_GenerateGreedy)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
