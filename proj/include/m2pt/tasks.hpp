#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "m2pt/model.hpp"

namespace m2pt {

// Token protocol shared by every synthetic task:
//   instruction = [task prefix (2 tokens), query marker, family token]
//   target      = [label token, end token]
namespace tokens {
inline constexpr int kPad = 0;
inline constexpr int kEnd = 1;
inline constexpr std::array<int, 4> kSystem = {2, 3, 4, 5};
inline constexpr int kQuery = 6;
inline constexpr int kAskShape = 7;
inline constexpr int kAskColor = 8;
inline constexpr int kAskCount = 9;
inline constexpr int kAskLeftOf = 10;
inline constexpr int kAskAbove = 11;
inline constexpr int kAskParity = 12;
inline constexpr int kShapeBase = 13;   // circle, square, triangle, cross
inline constexpr int kColorBase = 17;   // red, green, blue, yellow
inline constexpr int kCountBase = 21;   // one .. four
inline constexpr int kYes = 25;
inline constexpr int kNo = 26;
inline constexpr int kEven = 27;
inline constexpr int kOdd = 28;
inline constexpr int kPrefixBase = 29;
inline constexpr std::size_t kPrefixLen = 2;

/// Smallest vocabulary that can hold a suite of num_tasks tasks.
inline std::size_t required_vocab(std::size_t num_tasks) {
  return static_cast<std::size_t>(kPrefixBase) + kPrefixLen * num_tasks;
}
}  // namespace tokens

enum class TaskFamily { Shape, Color, Count, Spatial, Parity };
inline constexpr std::size_t kNumFamilies = 5;

const char* to_string(TaskFamily f);

enum class ShapeKind : std::uint8_t { Circle, Square, Triangle, Cross };
enum class ColorKind : std::uint8_t { Red, Green, Blue, Yellow };

/// Pixel side of one patch; patch_dim must equal 3·kPatchPixels².
inline constexpr std::size_t kPatchPixels = 4;
inline constexpr std::size_t kPatchDim = 3 * kPatchPixels * kPatchPixels;

struct SceneObject {
  std::size_t row = 0;
  std::size_t col = 0;
  ShapeKind shape = ShapeKind::Circle;
  ColorKind color = ColorKind::Red;
};

struct Scene {
  std::vector<SceneObject> objects;
  /// 0: full-intensity objects; 1: objects at 80% intensity. Background is black.
  int style = 0;
};

/// 4×4 occupancy mask of a shape, row-major.
const std::array<std::uint8_t, 16>& shape_mask(ShapeKind s);
std::array<float, 3> color_rgb(ColorKind c);

/// Draws the scene into a rows×cols×patch_dim image. Noise is additive
/// Gaussian with the given sigma drawn from noise_seed; sigma 0 is noiseless.
Tensor<float> render_scene(const Scene& scene, std::size_t rows, std::size_t cols,
                           double noise_sigma, std::uint64_t noise_seed);

struct Instance {
  Tensor<float> image;
  std::vector<int> instruction;
  std::vector<int> target;
  std::size_t task_id = 0;
  std::uint64_t seed = 0;
  std::size_t label = 0;
};

/// Stable content hash (hex SHA-256) of an instance.
std::string instance_hash(const Instance& inst);

struct SyntheticTask {
  std::size_t task_id = 0;
  TaskFamily family = TaskFamily::Shape;
  std::size_t variant = 0;
  std::vector<int> prefix;
  std::vector<int> question;
  std::vector<int> label_tokens;
  std::vector<Instance> instances;

  std::vector<int> instruction() const;
  std::vector<int> target_for(std::size_t label) const;
  std::size_t num_labels() const { return label_tokens.size(); }
};

struct TaskSuiteConfig {
  std::size_t num_tasks = 10;
  std::size_t instances_per_task = 200;
  std::uint64_t seed = 7;
  double holdout_fraction = 0.2;
  double noise_sigma = 0.05;
};

/// Scene for a latent label, deterministic in (task, label, seed).
Scene sample_scene(const SyntheticTask& task, std::size_t label, std::uint64_t seed,
                   std::size_t rows, std::size_t cols);

/// Rebuilds an instance from its stored (seed, target) record.
Instance regenerate_instance(const SyntheticTask& task, std::uint64_t seed,
                             const std::vector<int>& target, std::size_t rows, std::size_t cols,
                             double noise_sigma);

/// Task k has family k mod 5 and variant k / 5. Labels within a task are
/// balanced exactly (instance i has label i mod |labels|).
std::vector<SyntheticTask> generate_task_suite(const TaskSuiteConfig& config,
                                               const VisionEncoderSpec& vision,
                                               std::size_t vocab_size);

struct TaskSplit {
  std::vector<SyntheticTask> train;
  std::vector<SyntheticTask> unseen;
};

/// Holds out round(fraction·n) whole tasks. Held-out tasks are drawn from a
/// seeded permutation, preferring tasks whose family keeps a training task.
TaskSplit split_train_zeroshot(const std::vector<SyntheticTask>& suite, double holdout_fraction,
                               std::uint64_t seed);

/// Keeps round(fraction·n) instances per task: the prefix of a seeded
/// permutation, so smaller fractions are subsets of larger ones.
std::vector<SyntheticTask> subsample(const std::vector<SyntheticTask>& tasks, double fraction,
                                     std::uint64_t seed);

/// One line per instance: {"task_id","seed","instruction","target"}.
void write_split_jsonl(const std::filesystem::path& path, const std::vector<SyntheticTask>& tasks);

}  // namespace m2pt
