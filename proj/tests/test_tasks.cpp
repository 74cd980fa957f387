#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "test_util.hpp"

using namespace m2pt;

namespace {

VisionEncoderSpec grid() { return VisionEncoderSpec{}; }

TaskSuiteConfig suite_cfg(std::size_t n, std::size_t per, double noise = 0.05) {
  TaskSuiteConfig c;
  c.num_tasks = n;
  c.instances_per_task = per;
  c.noise_sigma = noise;
  return c;
}

// Objects recovered from raw pixels: per lit patch, its 4×4 mask and the
// dominant channels.
struct Seen {
  std::size_t row, col;
  std::array<std::uint8_t, 16> mask;
  std::array<bool, 3> channels;
};

std::vector<Seen> decode(const Tensor<float>& img) {
  const std::size_t rows = img.dim(0), cols = img.dim(1);
  std::vector<Seen> out;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const float* p = img.data() + (r * cols + c) * kPatchDim;
      Seen s{r, c, {}, {false, false, false}};
      bool any = false;
      for (std::size_t px = 0; px < 16; ++px) {
        for (std::size_t ch = 0; ch < 3; ++ch) {
          if (p[px * 3 + ch] > 0.3f) {
            s.mask[px] = 1;
            s.channels[ch] = true;
            any = true;
          }
        }
      }
      if (any) out.push_back(s);
    }
  }
  return out;
}

std::size_t shape_of(const Seen& s) {
  for (std::size_t k = 0; k < 4; ++k) {
    if (shape_mask(static_cast<ShapeKind>(k)) == s.mask) return k;
  }
  return 99;
}

std::size_t color_of(const Seen& s) {
  const auto [r, g, b] = s.channels;
  if (r && g) return 3;
  if (r) return 0;
  if (g) return 1;
  return b ? 2 : 99;
}

// Closed-form label for a noiseless instance.
std::size_t classify(const SyntheticTask& task, const Tensor<float>& img) {
  const auto objs = decode(img);
  switch (task.family) {
    case TaskFamily::Shape: return shape_of(objs.at(0));
    case TaskFamily::Color: return color_of(objs.at(0));
    case TaskFamily::Count: return objs.size() - 1;
    case TaskFamily::Parity: return objs.size() % 2 == 0 ? 0 : 1;
    case TaskFamily::Spatial: {
      const Seen* circle = nullptr;
      const Seen* square = nullptr;
      for (const auto& o : objs) (shape_of(o) == 0 ? circle : square) = &o;
      const bool horizontal = task.variant % 2 == 0;
      const std::size_t a = horizontal ? circle->col : circle->row;
      const std::size_t b = horizontal ? square->col : square->row;
      return a < b ? 0 : 1;
    }
  }
  return 99;
}

Tensor<float> mirror(const Tensor<float>& img, bool horizontal) {
  const std::size_t rows = img.dim(0), cols = img.dim(1);
  Tensor<float> out(img.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t py = 0; py < 4; ++py) {
        for (std::size_t px = 0; px < 4; ++px) {
          const std::size_t sr = horizontal ? r : rows - 1 - r;
          const std::size_t sc = horizontal ? cols - 1 - c : c;
          const std::size_t sy = horizontal ? py : 3 - py;
          const std::size_t sx = horizontal ? 3 - px : px;
          for (std::size_t ch = 0; ch < 3; ++ch) {
            out.data()[(r * cols + c) * kPatchDim + (py * 4 + px) * 3 + ch] =
                img.data()[(sr * cols + sc) * kPatchDim + (sy * 4 + sx) * 3 + ch];
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

TEST(Tasks, SuiteIsDeterministicPerSeed) {
  const auto a = generate_task_suite(suite_cfg(8, 100), grid(), 64);
  const auto b = generate_task_suite(suite_cfg(8, 100), grid(), 64);
  ASSERT_EQ(a.size(), 8u);
  for (std::size_t t = 0; t < 8; ++t) {
    ASSERT_EQ(a[t].instances.size(), 100u);
    for (std::size_t i = 0; i < 100; ++i) {
      EXPECT_EQ(instance_hash(a[t].instances[i]), instance_hash(b[t].instances[i]));
    }
  }
  TaskSuiteConfig other = suite_cfg(8, 100);
  other.seed = 8;
  const auto c = generate_task_suite(other, grid(), 64);
  EXPECT_NE(instance_hash(a[0].instances[0]), instance_hash(c[0].instances[0]));
}

TEST(Tasks, FamiliesCycleAndTokensFitVocabulary) {
  const auto suite = generate_task_suite(suite_cfg(10, 4), grid(), 64);
  std::set<int> targets;
  for (const auto& t : suite) {
    EXPECT_EQ(t.family, static_cast<TaskFamily>(t.task_id % 5));
    for (const auto& inst : t.instances) {
      EXPECT_EQ(inst.image.shape(), (Shape{4, 4, kPatchDim}));
      for (int tok : inst.target) EXPECT_LT(tok, 64);
      for (int tok : inst.instruction) EXPECT_LT(tok, 64);
      EXPECT_EQ(inst.target.back(), tokens::kEnd);
    }
    std::set<std::vector<int>> distinct;
    for (std::size_t l = 0; l < t.num_labels(); ++l) distinct.insert(t.target_for(l));
    EXPECT_EQ(distinct.size(), t.num_labels());
  }
}

TEST(Tasks, SmallVocabularyIsCapacityError) {
  EXPECT_THROW(generate_task_suite(suite_cfg(10, 4), grid(), tokens::required_vocab(10) - 1),
               CapacityError);
  EXPECT_THROW(generate_task_suite(suite_cfg(1, 4), grid(), 64), ConfigError);
}

TEST(Tasks, MirroredSpatialSceneFlipsTheLabel) {
  const auto suite = generate_task_suite(suite_cfg(10, 2), grid(), 64);
  for (std::size_t id : {3u, 8u}) {
    const SyntheticTask& task = suite[id];
    ASSERT_EQ(task.family, TaskFamily::Spatial);
    const bool horizontal = task.variant % 2 == 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const Instance yes = regenerate_instance(task, seed, task.target_for(0), 4, 4, 0.0);
      const Instance no = regenerate_instance(task, seed, task.target_for(1), 4, 4, 0.0);
      EXPECT_EQ(mirror(yes.image, horizontal), no.image);
      EXPECT_EQ(classify(task, yes.image), 0u);
      EXPECT_EQ(classify(task, no.image), 1u);
    }
  }
}

TEST(Tasks, PixelClassifiersSolveNoiselessInstances) {
  const auto suite = generate_task_suite(suite_cfg(10, 80, 0.0), grid(), 64);
  for (const auto& task : suite) {
    for (const auto& inst : task.instances) {
      EXPECT_EQ(classify(task, inst.image), inst.label) << "task " << task.task_id;
    }
  }
}

TEST(Tasks, LabelHistogramNearUniform) {
  const auto suite = generate_task_suite(suite_cfg(5, 1000, 0.0), grid(), 64);
  for (const auto& task : suite) {
    std::vector<std::size_t> hist(task.num_labels(), 0);
    for (const auto& inst : task.instances) ++hist.at(classify(task, inst.image));
    const double expect = 1000.0 / static_cast<double>(task.num_labels());
    for (std::size_t h : hist) EXPECT_NEAR(static_cast<double>(h), expect, 0.1 * expect);
  }
}

TEST(Tasks, SplitIsTaskLevelAndDeterministic) {
  const auto suite = generate_task_suite(suite_cfg(10, 6), grid(), 64);
  const TaskSplit s = split_train_zeroshot(suite, 0.2, 7);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.unseen.size(), 2u);
  std::set<std::size_t> ids;
  for (const auto& t : s.train) ids.insert(t.task_id);
  for (const auto& t : s.unseen) EXPECT_EQ(ids.count(t.task_id), 0u);

  std::set<std::string> train_hashes;
  for (const auto& t : s.train)
    for (const auto& i : t.instances) train_hashes.insert(instance_hash(i));
  for (const auto& t : s.unseen)
    for (const auto& i : t.instances) EXPECT_EQ(train_hashes.count(instance_hash(i)), 0u);

  // each held-out family still has a training sibling
  std::set<TaskFamily> fams;
  for (const auto& t : s.train) fams.insert(t.family);
  for (const auto& t : s.unseen) EXPECT_EQ(fams.count(t.family), 1u);

  const TaskSplit again = split_train_zeroshot(suite, 0.2, 7);
  ASSERT_EQ(again.unseen.size(), 2u);
  EXPECT_EQ(again.unseen[0].task_id, s.unseen[0].task_id);
  EXPECT_EQ(again.unseen[1].task_id, s.unseen[1].task_id);
}

TEST(Tasks, SplitWithEmptySideIsError) {
  const auto suite = generate_task_suite(suite_cfg(10, 2), grid(), 64);
  EXPECT_THROW(split_train_zeroshot(suite, 0.0, 1), SplitError);
  EXPECT_THROW(split_train_zeroshot(suite, 0.01, 1), SplitError);
  EXPECT_THROW(split_train_zeroshot(suite, 1.0, 1), SplitError);
}

TEST(Tasks, SubsampleCountsAndNesting) {
  const auto suite = generate_task_suite(suite_cfg(3, 100), grid(), 64);
  const auto full = subsample(suite, 1.0, 4);
  for (std::size_t t = 0; t < 3; ++t) {
    ASSERT_EQ(full[t].instances.size(), 100u);
    for (std::size_t i = 0; i < 100; ++i) {
      EXPECT_EQ(instance_hash(full[t].instances[i]), instance_hash(suite[t].instances[i]));
    }
  }
  const auto quarter = subsample(suite, 0.25, 4);
  const auto half = subsample(suite, 0.5, 4);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(quarter[t].instances.size(), 25u);
    std::set<std::string> h;
    for (const auto& i : half[t].instances) h.insert(instance_hash(i));
    for (const auto& i : quarter[t].instances) EXPECT_EQ(h.count(instance_hash(i)), 1u);
  }
  EXPECT_THROW(subsample(suite, 0.0, 4), SplitError);
  EXPECT_THROW(subsample(suite, 1.5, 4), SplitError);
  EXPECT_THROW(subsample(suite, 0.001, 4), SplitError);
}

TEST(Tasks, JsonlRecordsRegenerateIdenticalInstances) {
  const auto suite = generate_task_suite(suite_cfg(5, 6), grid(), 64);
  const auto dir = std::filesystem::temp_directory_path() / "m2pt_tasks_jsonl";
  std::filesystem::create_directories(dir);
  const auto path = dir / "split.jsonl";
  write_split_jsonl(path, suite);
  std::ifstream is(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    const auto rec = nlohmann::json::parse(line);
    const std::size_t id = rec["task_id"];
    const Instance& orig = suite[id].instances[n % 6];
    EXPECT_EQ(rec["instruction"].get<std::vector<int>>(), orig.instruction);
    const Instance back = regenerate_instance(suite[id], rec["seed"].get<std::uint64_t>(),
                                              rec["target"].get<std::vector<int>>(), 4, 4, 0.05);
    EXPECT_EQ(instance_hash(back), instance_hash(orig));
    ++n;
  }
  EXPECT_EQ(n, 30u);
  std::filesystem::remove_all(dir);
}
