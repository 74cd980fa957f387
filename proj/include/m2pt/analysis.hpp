#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "m2pt/trainer.hpp"

namespace m2pt {

// ---------------------------------------------------------------------------
// Parameter accounting

struct AccountDims {
  std::size_t vision_layers = 0;
  std::size_t vision_dim = 0;
  std::size_t language_layers = 0;
  std::size_t language_dim = 0;
  std::size_t vocab_size = 0;

  static AccountDims from(const ModelSpec& spec);
  /// CLIP-L (24 blocks, 1024 wide) feeding a 7B LLM (32 blocks, 4096 wide).
  static AccountDims paper_scale();
};

inline constexpr double kPaperScaleBaseTotal = 7.0e9;

struct ParamAccount {
  std::uint64_t visual_prompts = 0;
  std::uint64_t textual_prompts = 0;
  std::uint64_t interaction = 0;
  std::uint64_t head = 0;
  double base_total = 0.0;

  std::uint64_t trainable() const { return visual_prompts + textual_prompts + interaction + head; }
  /// trainable / base_total: the "# para" convention.
  double ratio_of_base() const;
  /// trainable / (base_total + trainable).
  double ratio_of_total() const;
  /// Percent string of ratio_of_base with the given number of decimals.
  std::string percent(int decimals) const;
};

/// Closed-form counts: |S_v|·Lv·d_v, |S_t|·Lt·d_t, d_v·d_t + d_t, d_t·V + V.
ParamAccount count_params_ratio(const AccountDims& dims, const PromptPlan& plan, double base_total,
                                const PartitionOptions& options);

/// Brute-force count of trainable elements actually registered.
template <typename T>
std::uint64_t count_trainable_elements(const ParameterStore<T>& params, const ParamPartition& part);

// ---------------------------------------------------------------------------
// Zero-shot evaluation

/// Produces the generated target sequence for an instance. `gold` may be
/// used only to stop early once the output has diverged.
using Predictor = std::function<std::vector<int>(const Instance& inst, std::span<const int> gold)>;

Predictor model_predictor(const M2ptModel<float>& model, std::size_t max_new_tokens = 4);

struct TaskAccuracy {
  std::size_t task_id = 0;
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

struct EvalResult {
  std::vector<TaskAccuracy> per_task;
  /// Mean over instances of all evaluated tasks.
  double mean_accuracy = 0.0;
};

/// Exact-match accuracy of greedy decodes. When `training` is given, any
/// task id present there makes the evaluation a state error.
EvalResult evaluate_accuracy(const Predictor& predict, const std::vector<SyntheticTask>& tasks,
                             const std::vector<SyntheticTask>* training = nullptr);

void write_eval_csv(const std::string& path, const EvalResult& result);

// ---------------------------------------------------------------------------
// Attention-region analysis

struct RegionAttention {
  Region region;
  std::size_t width = 0;
  /// Mean over the region's columns of attention received (column sums of
  /// the head-averaged map divided by the number of query rows).
  double mean_received = 0.0;
};

struct AttentionMap {
  Tensor<float> probs;  // [T×T], head-averaged
  std::vector<Region> tags;
  std::vector<RegionAttention> regions;  // present regions only, layout order
};

struct AttentionRegionReport {
  AttentionMap encoder;
  AttentionMap llm;
};

AttentionMap summarize_attention(const Tensor<float>& mean_probs, const std::vector<Region>& tags);

/// Last-layer maps of both towers for one instance. Throws StateError when
/// the trace did not capture attention.
AttentionRegionReport attention_report_from_trace(const ForwardTrace<float>& trace);

AttentionRegionReport extract_attention_report(const M2ptModel<float>& model, const Instance& inst);

/// Writes <stem>_encoder.csv, <stem>_llm.csv (raw matrices), <stem>_regions.csv
/// (region legend with spans and means).
void write_attention_report(const std::string& directory, const AttentionRegionReport& report);

}  // namespace m2pt
