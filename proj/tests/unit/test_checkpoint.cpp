#include <fstream>

#include <gtest/gtest.h>

#include "saber/checkpoint.hpp"
#include "saber/error.hpp"
#include "saber/fusion.hpp"
#include "test_support.hpp"

namespace {

using namespace saber;

model::Model toy_model(fusion::Mode mode = fusion::Mode::binary) {
  model::ModelConfig cfg;
  cfg.d = 8;
  cfg.n_heads = 2;
  cfg.fusion.mode = mode;
  return model::Model(cfg, 5, 21);
}

TEST(Checkpoint, RoundTripKeepsF32ValuesExactly) {
  for (auto mode : {fusion::Mode::binary, fusion::Mode::ternary, fusion::Mode::concat}) {
    model::Model m = toy_model(mode);
    round_to_f32(m.params());
    const CheckpointMeta meta{5, "abc"};
    const std::string bytes = serialize_checkpoint(m, meta);
    CheckpointMeta back;
    model::Model r = parse_checkpoint(bytes, &back);
    EXPECT_EQ(back.library_size, 5u);
    EXPECT_EQ(back.library_digest, "abc");
    EXPECT_EQ(r.config().fusion.mode, mode);
    ASSERT_EQ(r.params().size(), m.params().size());
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      const auto& a = m.params().at(i);
      const auto& b = r.params().at(i);
      EXPECT_EQ(a.name, b.name);
      EXPECT_EQ(a.decay, b.decay);
      EXPECT_TRUE((a.value.array() == b.value.array()).all()) << a.name;
    }
    EXPECT_EQ(serialize_checkpoint(r, meta), bytes);
  }
}

TEST(Checkpoint, RoundingIsWithinF32Precision) {
  model::Model m = toy_model();
  const ParamSet before = m.params();
  round_to_f32(m.params());
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto diff = (before.at(i).value - m.params().at(i).value).cwiseAbs();
    const auto bound = before.at(i).value.cwiseAbs() * 6e-8;
    EXPECT_TRUE((diff.array() <= bound.array()).all());
  }
}

TEST(Checkpoint, SaveAndLoadThroughFile) {
  saber::testing::TempDir dir("ckpt");
  model::Model m = toy_model();
  save_checkpoint(m, {5, "x"}, dir / "m.ckpt");
  model::Model r = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(r.params().num_scalars(), m.params().num_scalars());
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), Error);
}

TEST(Checkpoint, RejectsCorruptInput) {
  model::Model m = toy_model();
  const std::string bytes = serialize_checkpoint(m, {5, "x"});
  EXPECT_THROW(parse_checkpoint(""), FormatError);
  EXPECT_THROW(parse_checkpoint("{not json\n"), FormatError);
  EXPECT_THROW(parse_checkpoint("{\"format\":\"other\"}\n"), FormatError);
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(parse_checkpoint(bytes + "zz"), FormatError);
}

TEST(Checkpoint, LibraryDigestDependsOnIdsAndOrder) {
  const Store a = saber::testing::random_store(4, 3, 1);
  const Store b = saber::testing::random_store(4, 3, 2);  // same ids, other vectors
  EXPECT_EQ(library_digest(a.library), library_digest(b.library));
  DemoLibrary reversed(3);
  for (auto it = a.library.records().rbegin(); it != a.library.records().rend(); ++it) {
    reversed.add(*it);
  }
  EXPECT_NE(library_digest(a.library), library_digest(reversed));
  EXPECT_EQ(library_digest(a.library).size(), 64u);
}

}  // namespace
