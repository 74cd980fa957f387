#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace m2pt;
using namespace m2pt::testing;

namespace {

Tensor<double> rows_of(const Tensor<double>& x, const std::vector<std::size_t>& perm) {
  Tensor<double> out(x.shape());
  for (std::size_t r = 0; r < perm.size(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) = x.at(perm[r], c);
  }
  return out;
}

Tensor<double> random_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  Tensor<double> t = Tensor<double>::matrix(n, d);
  Rng rng(seed);
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

}  // namespace

TEST(ModelCore, SpecValidationNamesTheField) {
  VisionEncoderSpec v;
  v.num_heads = 3;
  try {
    v.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("vision.heads"), std::string::npos);
  }
  LanguageModelSpec l;
  l.num_layers = 0;
  EXPECT_THROW(l.validate(), ConfigError);
}

TEST(ModelCore, PatchifyRejectsGridMismatch) {
  const ModelSpec spec = toy_spec();
  auto model = M2ptModel<double>::create(spec, toy_plan(), {}, 1);
  Tape<double> tape;
  ParamBinder<double> b(tape, model.params());
  Tensor<float> wrong({3, 2, spec.vision.patch_dim});
  EXPECT_THROW(model.encoder().patchify_embed(b, wrong), DimensionError);
  const Tensor<float> right = random_image(spec.vision, 3);
  const TokenSequence seq = model.encoder().patchify_embed(b, right);
  EXPECT_EQ(seq.length(), spec.vision.num_patches());
  EXPECT_EQ(seq.count(Region::ImageTokens), spec.vision.num_patches());
}

TEST(ModelCore, BidirectionalBlockIsPermutationEquivariant) {
  ParameterStore<double> store;
  Rng rng(4);
  register_block(store, "blk", 16, rng);
  const Tensor<double> x = random_rows(5, 16, 5);
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};

  Tape<double> t1;
  ParamBinder<double> b1(t1, store);
  const Tensor<double> y = t1.value(block_forward<double>(b1, "blk", t1.constant(x), 2, false, nullptr));

  Tape<double> t2;
  ParamBinder<double> b2(t2, store);
  const Tensor<double> yp = t2.value(block_forward<double>(b2, "blk", t2.constant(rows_of(x, perm)), 2, false, nullptr));

  const Tensor<double> expect = rows_of(y, perm);
  for (std::size_t i = 0; i < yp.size(); ++i) EXPECT_NEAR(yp[i], expect[i], 1e-12);
}

TEST(ModelCore, CausalBlockIgnoresFuturePositions) {
  ParameterStore<double> store;
  Rng rng(6);
  register_block(store, "blk", 16, rng);
  Tensor<double> x = random_rows(6, 16, 7);
  Tape<double> t1;
  ParamBinder<double> b1(t1, store);
  const Tensor<double> y = t1.value(block_forward<double>(b1, "blk", t1.constant(x), 4, true, nullptr));
  for (std::size_t c = 0; c < 16; ++c) x.at(4, c) += 3.0;
  Tape<double> t2;
  ParamBinder<double> b2(t2, store);
  const Tensor<double> y2 = t2.value(block_forward<double>(b2, "blk", t2.constant(x), 4, true, nullptr));
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(y.at(r, c), y2.at(r, c));
  }
  double diff = 0.0;
  for (std::size_t c = 0; c < 16; ++c) diff += std::abs(y.at(5, c) - y2.at(5, c));
  EXPECT_GT(diff, 0.0);
}

TEST(ModelCore, LanguageModelRejectsOverlongSequences) {
  ModelSpec spec = toy_spec();
  spec.language.max_seq_len = 8;
  auto model = M2ptModel<double>::create(spec, toy_plan(0, 2), {}, 1);
  const ToyExample ex = toy_example(spec);
  Tape<double> tape;
  ParamBinder<double> b(tape, model.params());
  // 2 system + 6 vision + 3 instruction + 2 target = 13 > 8
  EXPECT_THROW(model.loss(b, ex.input()), CapacityError);
}

TEST(ModelCore, ComponentSeedStreamsAreIndependent) {
  const ModelSpec spec = toy_spec();
  const auto a = M2ptModel<double>::create(spec, toy_plan(2, 2), {}, 9);
  const auto b = M2ptModel<double>::create(spec, toy_plan(5, 2), {}, 9);
  for (const auto& [name, t] : a.params().entries()) {
    if (name.rfind("prompt.textual.", 0) == 0) continue;
    EXPECT_EQ(t, b.params().get(name)) << name;
  }
  const auto c = M2ptModel<double>::create(spec, toy_plan(2, 2), {}, 10);
  EXPECT_FALSE(a.params().get("llm.token_embed") == c.params().get("llm.token_embed"));
}

TEST(ModelCore, GreedyTokensPicksFirstMaximum) {
  Tensor<float> logits = Tensor<float>::matrix(2, 4);
  logits.at(0, 2) = 1.0f;
  logits.at(0, 3) = 1.0f;
  logits.at(1, 0) = -1.0f;
  EXPECT_EQ(greedy_tokens(logits), (std::vector<int>{2, 1}));
}

TEST(ModelCore, TargetLogitsPredictEachTargetFromThePreviousRow) {
  const ModelSpec spec = toy_spec();
  const auto model = M2ptModel<double>::create(spec, toy_plan(), {}, 3);
  ToyExample ex = toy_example(spec);
  Tape<double> t1;
  ParamBinder<double> b1(t1, model.params());
  const Tensor<double> logits = t1.value(model.target_logits(b1, ex.input()));
  ASSERT_EQ(logits.shape(), (Shape{2, spec.language.vocab_size}));
  // The first target's logits cannot depend on the target tokens themselves.
  ex.target = {4, 1};
  Tape<double> t2;
  ParamBinder<double> b2(t2, model.params());
  const Tensor<double> logits2 = t2.value(model.target_logits(b2, ex.input()));
  for (std::size_t c = 0; c < logits.cols(); ++c) EXPECT_EQ(logits.at(0, c), logits2.at(0, c));
}

TEST(ModelCore, GreedyDecodeStopsAtEndTokenOrLimit) {
  const ModelSpec spec = toy_spec();
  const auto model = M2ptModel<float>::create(spec, toy_plan(), {}, 3);
  const ToyExample ex = toy_example(spec);
  ModelInput in{&ex.image, ex.system, ex.instruction, {}};
  const auto out = model.greedy_decode(in, 5, 1);
  ASSERT_FALSE(out.empty());
  EXPECT_LE(out.size(), 5u);
  for (std::size_t i = 0; i + 1 < out.size(); ++i) EXPECT_NE(out[i], 1);
  // Stop-on-mismatch only truncates: the produced prefix is the same.
  const std::vector<int> gold = {out[0] == 0 ? 1 : 0};
  const auto cut = model.greedy_decode(in, 5, 1, gold);
  ASSERT_EQ(cut.size(), 1u);
  EXPECT_EQ(cut[0], out[0]);
}
