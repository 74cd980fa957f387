#pragma once

#include <vector>

#include "m2pt/experiments.hpp"
#include "m2pt/hash.hpp"
#include "m2pt/rng.hpp"

namespace m2pt::testing {

// N=M=2, d_v=16, d_t=32: small enough for exhaustive finite differences.
inline ModelSpec toy_spec() {
  ModelSpec s;
  s.vision = VisionEncoderSpec{2, 16, 2, 2, 2, 12};
  s.language = LanguageModelSpec{2, 32, 2, 16, 64};
  return s;
}

inline PromptPlan toy_plan(std::size_t lt = 2, std::size_t lv = 2,
                           ScheduleVariant schedule = ScheduleVariant::All) {
  PromptPlan p;
  p.textual_len = lt;
  p.visual_len = lv;
  p.schedule = schedule;
  return p;
}

inline Tensor<float> random_image(const VisionEncoderSpec& v, std::uint64_t seed) {
  Tensor<float> img({v.patch_rows, v.patch_cols, v.patch_dim});
  Rng rng(seed);
  for (auto& x : img.values()) x = static_cast<float>(rng.uniform());
  return img;
}

struct ToyExample {
  Tensor<float> image;
  std::vector<int> system{2, 3};
  std::vector<int> instruction{5, 6, 7};
  std::vector<int> target{9, 1};

  ModelInput input() const { return ModelInput{&image, system, instruction, target}; }
};

inline ToyExample toy_example(const ModelSpec& spec, std::uint64_t seed = 11) {
  ToyExample ex;
  ex.image = random_image(spec.vision, seed);
  return ex;
}

// A RunConfig small enough for end-to-end runs inside unit tests.
inline RunConfig tiny_run_config() {
  RunConfig c;
  c.model.vision = VisionEncoderSpec{1, 16, 2, 2, 2, 48};
  c.model.language = LanguageModelSpec{1, 32, 2, 64, 64};
  c.prompt.textual_len = 2;
  c.prompt.visual_len = 2;
  c.tasks.num_tasks = 5;
  c.tasks.instances_per_task = 8;
  c.tasks.holdout_fraction = 0.4;
  c.train.epochs = 1;
  c.train.batch_size = 4;
  c.train.max_steps = 3;
  c.eval_max_new_tokens = 2;
  return c;
}

template <typename T>
std::map<std::string, std::string> hashes(const ParameterStore<T>& store) {
  std::map<std::string, std::string> out;
  for (const auto& [name, t] : store.entries()) out[name] = tensor_sha256(t);
  return out;
}

}  // namespace m2pt::testing
