#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace m2pt;
using namespace m2pt::testing;

TEST(Fusion, RegionLayoutFollowsFixedOrder) {
  const std::vector<Region> tags = {Region::TextualPrompt, Region::TextualPrompt, Region::SystemText,
                                    Region::ImageTokens,   Region::ImageTokens,   Region::ImageTokens,
                                    Region::Instruction,   Region::Target};
  const RegionLayout layout = RegionLayout::from_tags(tags);
  EXPECT_EQ(layout.span(Region::TextualPrompt).width(), 2u);
  EXPECT_EQ(layout.span(Region::VisualPrompt).width(), 0u);
  EXPECT_EQ(layout.span(Region::ImageTokens).begin, 3u);
  EXPECT_EQ(layout.span(Region::ImageTokens).end, 6u);
  EXPECT_EQ(layout.span(Region::Target).begin, 7u);
  EXPECT_EQ(layout.total(), 8u);

  const std::vector<Region> bad = {Region::SystemText, Region::TextualPrompt};
  EXPECT_THROW(RegionLayout::from_tags(bad), LayoutError);
}

TEST(Fusion, FusedLayoutAndLossMask) {
  const ModelSpec spec = toy_spec();
  const auto model = M2ptModel<double>::create(spec, toy_plan(3, 4), {}, 1);
  const ToyExample ex = toy_example(spec);
  Tape<double> tape;
  ParamBinder<double> b(tape, model.params());
  const TokenSequence enc = model.encode(b, ex.image);
  const FusedSequence f = model.fuse(b, enc, ex.system, ex.instruction, ex.target);
  const auto& L = f.layout;
  EXPECT_EQ(L.span(Region::TextualPrompt).width(), 3u);
  EXPECT_EQ(L.span(Region::SystemText).width(), 2u);
  EXPECT_EQ(L.span(Region::VisualPrompt).width(), 4u);
  EXPECT_EQ(L.span(Region::ImageTokens).width(), spec.vision.num_patches());
  EXPECT_EQ(L.span(Region::Instruction).width(), 3u);
  EXPECT_EQ(L.span(Region::Target).width(), 2u);
  EXPECT_EQ(tape.value(f.sequence.embeddings).shape(), (Shape{L.total(), spec.language.model_dim}));
  for (std::size_t i = 0; i < f.loss_mask.size(); ++i) {
    EXPECT_EQ(f.loss_mask[i], i >= L.span(Region::Target).begin ? 1 : 0);
  }
}

TEST(Fusion, PositionsAreAddedOnlyToTheCarriedBlock) {
  // The carried block gets identical rows regardless of the textual prompt
  // length in front of it.
  const ModelSpec spec = toy_spec();
  const ToyExample ex = toy_example(spec);
  auto rows_after_prompt = [&](std::size_t lt) {
    const auto model = M2ptModel<double>::create(spec, toy_plan(lt, 2), {}, 6);
    Tape<double> tape;
    ParamBinder<double> b(tape, model.params());
    const FusedSequence f = model.fuse(b, model.encode(b, ex.image), ex.system, ex.instruction, ex.target);
    const Tensor<double>& v = tape.value(f.sequence.embeddings);
    Tensor<double> out = Tensor<double>::matrix(v.rows() - lt, v.cols());
    for (std::size_t r = lt; r < v.rows(); ++r) {
      for (std::size_t c = 0; c < v.cols(); ++c) out.at(r - lt, c) = v.at(r, c);
    }
    return out;
  };
  const Tensor<double> a = rows_after_prompt(0);
  const Tensor<double> b = rows_after_prompt(3);
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Fusion, PromptRowsCarryNoPositionalTerm) {
  const ModelSpec spec = toy_spec();
  const auto model = M2ptModel<double>::create(spec, toy_plan(3, 2), {}, 7);
  const ToyExample ex = toy_example(spec);
  Tape<double> tape;
  ParamBinder<double> b(tape, model.params());
  const FusedSequence f = model.fuse(b, model.encode(b, ex.image), ex.system, ex.instruction, ex.target);
  const Tensor<double>& v = tape.value(f.sequence.embeddings);
  const Tensor<double>& p = model.params().get(textual_prompt_name(1));
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < v.cols(); ++c) EXPECT_EQ(v.at(r, c), p.at(r, c));
  }
}

TEST(Fusion, ProjectPromptsFalseDropsVisualPromptStates) {
  const ModelSpec spec = toy_spec();
  FusionOptions opts;
  opts.project_prompts = false;
  const auto model = M2ptModel<double>::create(spec, toy_plan(2, 4), opts, 1);
  const ToyExample ex = toy_example(spec);
  Tape<double> tape;
  ParamBinder<double> b(tape, model.params());
  const FusedSequence f = model.fuse(b, model.encode(b, ex.image), ex.system, ex.instruction, ex.target);
  EXPECT_EQ(f.layout.span(Region::VisualPrompt).width(), 0u);
  EXPECT_EQ(f.layout.span(Region::ImageTokens).width(), spec.vision.num_patches());
}

TEST(Fusion, InteractionLayerIsAffinePerPosition) {
  ParameterStore<double> store;
  Rng rng(3);
  InteractionLayer<double>(4, 6).register_params(store, rng);
  const double bound = std::sqrt(6.0 / 10.0);
  for (double w : store.get(InteractionLayer<double>::kWeight).values()) EXPECT_LE(std::abs(w), bound);
  for (double bias : store.get(InteractionLayer<double>::kBias).values()) EXPECT_EQ(bias, 0.0);
  store.get(InteractionLayer<double>::kBias)[2] = 0.25;

  Tape<double> tape;
  ParamBinder<double> b(tape, store);
  Tensor<double> x = Tensor<double>::matrix(2, 4);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1 * static_cast<double>(i + 1);
  const TokenSequence out =
      project_vision(b, TokenSequence{tape.constant(x), {Region::ImageTokens, Region::ImageTokens}, false});
  const Tensor<double>& y = tape.value(out.embeddings);
  const Tensor<double>& W = store.get(InteractionLayer<double>::kWeight);
  const Tensor<double>& B = store.get(InteractionLayer<double>::kBias);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 6; ++c) {
      double e = B[c];
      for (std::size_t k = 0; k < 4; ++k) e += x.at(r, k) * W.at(k, c);
      EXPECT_NEAR(y.at(r, c), e, 1e-12);
    }
  }
  Tape<double> t2;
  ParamBinder<double> b2(t2, store);
  EXPECT_THROW(project_vision(b2, TokenSequence{t2.constant(Tensor<double>::matrix(2, 5)),
                                                {Region::ImageTokens, Region::ImageTokens},
                                                false}),
               DimensionError);
}

TEST(Fusion, CapacityIsCheckedBeforeAssembly) {
  ModelSpec spec = toy_spec();
  spec.language.max_seq_len = 12;
  const auto model = M2ptModel<double>::create(spec, toy_plan(2, 2), {}, 1);
  const ToyExample ex = toy_example(spec);
  Tape<double> tape;
  ParamBinder<double> b(tape, model.params());
  EXPECT_THROW(model.fuse(b, model.encode(b, ex.image), ex.system, ex.instruction, ex.target),
               CapacityError);
}
