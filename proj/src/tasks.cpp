#include "m2pt/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "m2pt/hash.hpp"
#include "m2pt/rng.hpp"

namespace m2pt {

const char* to_string(TaskFamily f) {
  switch (f) {
    case TaskFamily::Shape: return "shape";
    case TaskFamily::Color: return "color";
    case TaskFamily::Count: return "count";
    case TaskFamily::Spatial: return "spatial";
    case TaskFamily::Parity: return "parity";
  }
  return "?";
}

const std::array<std::uint8_t, 16>& shape_mask(ShapeKind s) {
  static const std::array<std::uint8_t, 16> circle = {0, 1, 1, 0,
                                                      1, 1, 1, 1,
                                                      1, 1, 1, 1,
                                                      0, 1, 1, 0};
  static const std::array<std::uint8_t, 16> square = {1, 1, 1, 1,
                                                      1, 0, 0, 1,
                                                      1, 0, 0, 1,
                                                      1, 1, 1, 1};
  static const std::array<std::uint8_t, 16> triangle = {0, 0, 0, 0,
                                                        0, 1, 1, 0,
                                                        1, 1, 1, 1,
                                                        1, 1, 1, 1};
  static const std::array<std::uint8_t, 16> cross = {1, 0, 0, 1,
                                                     0, 1, 1, 0,
                                                     0, 1, 1, 0,
                                                     1, 0, 0, 1};
  switch (s) {
    case ShapeKind::Circle: return circle;
    case ShapeKind::Square: return square;
    case ShapeKind::Triangle: return triangle;
    case ShapeKind::Cross: return cross;
  }
  return circle;
}

std::array<float, 3> color_rgb(ColorKind c) {
  switch (c) {
    case ColorKind::Red: return {1.0f, 0.0f, 0.0f};
    case ColorKind::Green: return {0.0f, 1.0f, 0.0f};
    case ColorKind::Blue: return {0.0f, 0.0f, 1.0f};
    case ColorKind::Yellow: return {1.0f, 1.0f, 0.0f};
  }
  return {0.0f, 0.0f, 0.0f};
}

Tensor<float> render_scene(const Scene& scene, std::size_t rows, std::size_t cols,
                           double noise_sigma, std::uint64_t noise_seed) {
  const float intensity = scene.style == 1 ? 0.8f : 1.0f;
  Tensor<float> image({rows, cols, kPatchDim});
  for (const SceneObject& obj : scene.objects) {
    if (obj.row >= rows || obj.col >= cols) {
      throw DimensionError("scene object outside the " + std::to_string(rows) + "×" +
                           std::to_string(cols) + " grid");
    }
    const auto& mask = shape_mask(obj.shape);
    const auto rgb = color_rgb(obj.color);
    float* patch = image.data() + (obj.row * cols + obj.col) * kPatchDim;
    for (std::size_t p = 0; p < kPatchPixels * kPatchPixels; ++p) {
      if (!mask[p]) continue;
      for (std::size_t c = 0; c < 3; ++c) patch[p * 3 + c] = rgb[c] * intensity;
    }
  }
  if (noise_sigma > 0.0) {
    Rng rng(noise_seed);
    for (float& v : image.values()) v += static_cast<float>(rng.normal(0.0, noise_sigma));
  }
  return image;
}

std::string instance_hash(const Instance& inst) {
  Sha256 h;
  const auto task = static_cast<std::uint64_t>(inst.task_id);
  h.update(&task, sizeof task);
  h.update(&inst.seed, sizeof inst.seed);
  h.update(inst.instruction.data(), inst.instruction.size() * sizeof(int));
  h.update(inst.target.data(), inst.target.size() * sizeof(int));
  h.update(inst.image.data(), inst.image.size() * sizeof(float));
  return h.hex_digest();
}

std::vector<int> SyntheticTask::instruction() const {
  std::vector<int> out = prefix;
  out.insert(out.end(), question.begin(), question.end());
  return out;
}

std::vector<int> SyntheticTask::target_for(std::size_t label) const {
  return {label_tokens.at(label), tokens::kEnd};
}

namespace {

SyntheticTask make_task(std::size_t task_id) {
  SyntheticTask task;
  task.task_id = task_id;
  task.family = static_cast<TaskFamily>(task_id % kNumFamilies);
  task.variant = task_id / kNumFamilies;
  for (std::size_t i = 0; i < tokens::kPrefixLen; ++i) {
    task.prefix.push_back(tokens::kPrefixBase + static_cast<int>(tokens::kPrefixLen * task_id + i));
  }
  switch (task.family) {
    case TaskFamily::Shape:
      task.question = {tokens::kQuery, tokens::kAskShape};
      for (int i = 0; i < 4; ++i) task.label_tokens.push_back(tokens::kShapeBase + i);
      break;
    case TaskFamily::Color:
      task.question = {tokens::kQuery, tokens::kAskColor};
      for (int i = 0; i < 4; ++i) task.label_tokens.push_back(tokens::kColorBase + i);
      break;
    case TaskFamily::Count:
      task.question = {tokens::kQuery, tokens::kAskCount};
      for (int i = 0; i < 4; ++i) task.label_tokens.push_back(tokens::kCountBase + i);
      break;
    case TaskFamily::Spatial:
      task.question = {tokens::kQuery, task.variant % 2 == 0 ? tokens::kAskLeftOf : tokens::kAskAbove};
      task.label_tokens = {tokens::kYes, tokens::kNo};
      break;
    case TaskFamily::Parity:
      task.question = {tokens::kQuery, tokens::kAskParity};
      task.label_tokens = {tokens::kEven, tokens::kOdd};
      break;
  }
  return task;
}

std::vector<std::size_t> distinct_cells(Rng& rng, std::size_t count, std::size_t total) {
  std::vector<std::size_t> cells(total);
  std::iota(cells.begin(), cells.end(), 0);
  rng.shuffle(cells.begin(), cells.end());
  cells.resize(count);
  return cells;
}

ShapeKind random_shape(Rng& rng) { return static_cast<ShapeKind>(rng.below(4)); }
ColorKind random_color(Rng& rng) { return static_cast<ColorKind>(rng.below(4)); }

}  // namespace

Scene sample_scene(const SyntheticTask& task, std::size_t label, std::uint64_t seed,
                   std::size_t rows, std::size_t cols) {
  if (label >= task.num_labels()) {
    throw DimensionError("label " + std::to_string(label) + " outside task label set");
  }
  Rng rng(derive_seed(seed, "scene"));
  Scene scene;
  scene.style = task.family == TaskFamily::Spatial ? 0 : static_cast<int>(task.variant % 2);
  const std::size_t cells = rows * cols;
  auto random_objects = [&](std::size_t count) {
    for (std::size_t cell : distinct_cells(rng, count, cells)) {
      scene.objects.push_back({cell / cols, cell % cols, random_shape(rng), random_color(rng)});
    }
  };
  switch (task.family) {
    case TaskFamily::Shape: {
      const std::size_t cell = rng.below(cells);
      scene.objects.push_back({cell / cols, cell % cols, static_cast<ShapeKind>(label), random_color(rng)});
      break;
    }
    case TaskFamily::Color: {
      const std::size_t cell = rng.below(cells);
      scene.objects.push_back({cell / cols, cell % cols, random_shape(rng), static_cast<ColorKind>(label)});
      break;
    }
    case TaskFamily::Count:
      random_objects(label + 1);
      break;
    case TaskFamily::Parity: {
      // even → 2 or 4 objects, odd → 1 or 3
      const std::size_t count = (label == 0 ? 2 : 1) + 2 * rng.below(2);
      random_objects(count);
      break;
    }
    case TaskFamily::Spatial: {
      // A circle and a square on distinct lines along the asked axis. The
      // "no" scene is the mirror image of the "yes" scene.
      const bool horizontal = task.variant % 2 == 0;
      const std::size_t extent = horizontal ? cols : rows;
      const std::size_t other = horizontal ? rows : cols;
      auto lines = distinct_cells(rng, 2, extent);
      std::sort(lines.begin(), lines.end());
      std::size_t a = lines[0];
      std::size_t b = lines[1];
      if (label == 1) {
        a = extent - 1 - a;
        b = extent - 1 - b;
      }
      const std::size_t o1 = rng.below(other);
      const std::size_t o2 = rng.below(other);
      const ColorKind c1 = random_color(rng);
      const ColorKind c2 = random_color(rng);
      if (horizontal) {
        scene.objects.push_back({o1, a, ShapeKind::Circle, c1});
        scene.objects.push_back({o2, b, ShapeKind::Square, c2});
      } else {
        scene.objects.push_back({a, o1, ShapeKind::Circle, c1});
        scene.objects.push_back({b, o2, ShapeKind::Square, c2});
      }
      break;
    }
  }
  return scene;
}

namespace {

Instance build_instance(const SyntheticTask& task, std::size_t label, std::uint64_t seed,
                        std::size_t rows, std::size_t cols, double noise_sigma) {
  Instance inst;
  inst.task_id = task.task_id;
  inst.seed = seed;
  inst.label = label;
  inst.instruction = task.instruction();
  inst.target = task.target_for(label);
  inst.image = render_scene(sample_scene(task, label, seed, rows, cols), rows, cols, noise_sigma,
                            derive_seed(seed, "noise"));
  return inst;
}

}  // namespace

Instance regenerate_instance(const SyntheticTask& task, std::uint64_t seed,
                             const std::vector<int>& target, std::size_t rows, std::size_t cols,
                             double noise_sigma) {
  if (target.empty()) throw DimensionError("empty target record");
  const auto it = std::find(task.label_tokens.begin(), task.label_tokens.end(), target.front());
  if (it == task.label_tokens.end()) {
    throw DimensionError("target token " + std::to_string(target.front()) + " is not a label of task " +
                         std::to_string(task.task_id));
  }
  return build_instance(task, static_cast<std::size_t>(it - task.label_tokens.begin()), seed, rows,
                        cols, noise_sigma);
}

std::vector<SyntheticTask> generate_task_suite(const TaskSuiteConfig& config,
                                               const VisionEncoderSpec& vision,
                                               std::size_t vocab_size) {
  if (config.num_tasks < 2) {
    throw ConfigError("tasks.num_tasks must be at least 2");
  }
  if (vision.patch_dim != kPatchDim) {
    throw ConfigError("vision.patch_dim must be " + std::to_string(kPatchDim) +
                      " for the synthetic renderer");
  }
  if (vision.patch_rows < 2 || vision.patch_cols < 2 || vision.num_patches() < 4) {
    throw ConfigError("synthetic tasks need a patch grid of at least 2×2");
  }
  if (vocab_size < tokens::required_vocab(config.num_tasks)) {
    throw CapacityError("vocabulary of " + std::to_string(vocab_size) + " cannot hold label and prefix tokens for " +
                        std::to_string(config.num_tasks) + " tasks (need " +
                        std::to_string(tokens::required_vocab(config.num_tasks)) + ")");
  }
  std::vector<SyntheticTask> suite;
  for (std::size_t k = 0; k < config.num_tasks; ++k) {
    SyntheticTask task = make_task(k);
    const std::uint64_t task_seed = derive_seed(config.seed, "task" + std::to_string(k));
    task.instances.reserve(config.instances_per_task);
    for (std::size_t i = 0; i < config.instances_per_task; ++i) {
      task.instances.push_back(build_instance(task, i % task.num_labels(), derive_seed(task_seed, i),
                                              vision.patch_rows, vision.patch_cols,
                                              config.noise_sigma));
    }
    suite.push_back(std::move(task));
  }
  return suite;
}

TaskSplit split_train_zeroshot(const std::vector<SyntheticTask>& suite, double holdout_fraction,
                               std::uint64_t seed) {
  const std::size_t n = suite.size();
  const auto holdout = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(n)));
  if (!(holdout_fraction > 0.0) || holdout == 0 || holdout >= n) {
    throw SplitError("holdout fraction " + std::to_string(holdout_fraction) + " over " +
                     std::to_string(n) + " tasks leaves an empty side");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(order.begin(), order.end());

  std::array<std::size_t, kNumFamilies> remaining{};
  for (const auto& t : suite) ++remaining[static_cast<std::size_t>(t.family)];
  std::vector<bool> held(n, false);
  std::size_t chosen = 0;
  for (std::size_t idx : order) {
    if (chosen == holdout) break;
    const auto fam = static_cast<std::size_t>(suite[idx].family);
    if (remaining[fam] > 1) {
      held[idx] = true;
      --remaining[fam];
      ++chosen;
    }
  }
  for (std::size_t idx : order) {
    if (chosen == holdout) break;
    if (!held[idx]) {
      held[idx] = true;
      ++chosen;
    }
  }
  TaskSplit split;
  for (std::size_t i = 0; i < n; ++i) {
    (held[i] ? split.unseen : split.train).push_back(suite[i]);
  }
  return split;
}

std::vector<SyntheticTask> subsample(const std::vector<SyntheticTask>& tasks, double fraction,
                                     std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw SplitError("subsample fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  std::vector<SyntheticTask> out;
  std::size_t kept_total = 0;
  for (const SyntheticTask& task : tasks) {
    SyntheticTask reduced = task;
    reduced.instances.clear();
    const std::size_t n = task.instances.size();
    const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "subsample" + std::to_string(task.task_id)));
    rng.shuffle(order.begin(), order.end());
    order.resize(keep);
    std::sort(order.begin(), order.end());
    for (std::size_t i : order) reduced.instances.push_back(task.instances[i]);
    kept_total += keep;
    out.push_back(std::move(reduced));
  }
  if (kept_total == 0) {
    throw SplitError("subsample fraction " + std::to_string(fraction) + " keeps no instances");
  }
  return out;
}

void write_split_jsonl(const std::filesystem::path& path, const std::vector<SyntheticTask>& tasks) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  for (const SyntheticTask& task : tasks) {
    for (const Instance& inst : task.instances) {
      nlohmann::json rec = {{"task_id", inst.task_id},
                            {"seed", inst.seed},
                            {"instruction", inst.instruction},
                            {"target", inst.target}};
      os << rec.dump() << '\n';
    }
  }
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace m2pt
