#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "m2pt/trainer.hpp"

namespace m2pt {

/// Every knob of a run. Serialized as sectioned `key = value` text:
/// [vision] [language] [prompt] [train] [tasks] [run].
struct RunConfig {
  ModelSpec model;
  PromptPlan prompt;
  TrainConfig train;
  TaskSuiteConfig tasks;
  /// Per-task instance fraction kept for training (data-volume sweeps).
  double data_fraction = 1.0;
  /// Root seed for backbone, prompt, fusion initialization and shuffling.
  std::uint64_t seed = 1;
  bool head_trainable = false;
  bool interaction_trainable = true;
  bool project_prompts = true;
  std::size_t eval_max_new_tokens = 4;

  /// Checks every field; throws ConfigError naming the first bad one.
  void validate() const;

  PartitionOptions partition_options() const { return {head_trainable, interaction_trainable}; }
  FusionOptions fusion_options() const { return {project_prompts}; }
  /// Training settings with the run seed applied.
  TrainConfig train_config() const;

  /// Assigns one field by dotted key ("train.lr"). Unknown keys and
  /// unparsable values throw ConfigError.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();

  /// Full, round-trippable text form.
  std::string echo() const;

  /// Starts from defaults and applies every key in the text. Does not validate.
  static RunConfig parse(const std::string& text);
  /// File-not-found is an IoError.
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace m2pt
