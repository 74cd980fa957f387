#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "m2pt/pipeline.hpp"
#include "m2pt/tasks.hpp"

namespace m2pt {

struct PartitionOptions {
  bool head_trainable = false;
  /// False freezes fusion.* at initialization (the interaction ablation).
  bool interaction_trainable = true;
};

/// Disjoint trainable/frozen split covering every registered parameter.
struct ParamPartition {
  std::set<std::string> trainable;
  std::set<std::string> frozen;

  bool is_trainable(const std::string& name) const { return trainable.count(name) != 0; }
};

/// Trainable = prompt.* ∪ fusion.* (unless frozen by option) ∪ head.* (iff
/// head_trainable). Every name must belong to a known component.
template <typename T>
ParamPartition partition_params(const ParameterStore<T>& params, const PartitionOptions& options);

struct TrainConfig {
  double base_lr = 7e-4;
  double warmup_ratio = 0.03;
  std::size_t epochs = 3;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  double weight_decay = 0.0;
  double clip_norm = 1.0;
  /// Optional cap on optimizer steps (0: none). The schedule spans the capped total.
  std::size_t max_steps = 0;

  void validate() const;
};

struct LRSchedule {
  std::size_t total_steps = 0;
  std::size_t warmup_steps = 0;

  /// W = round(warmup_ratio·T), kept below T.
  static LRSchedule make(std::size_t total_steps, double warmup_ratio);
};

/// Linear warmup base·(s+1)/W for s < W, then cosine decay to 0 at s = T.
double lr_at_step(const LRSchedule& schedule, double base_lr, std::size_t step);

/// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.0)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  /// Updates every name in `trainable`; missing gradients count as zero.
  void step(ParameterStore<float>& params, const std::set<std::string>& trainable,
            const std::map<std::string, Tensor<float>>& grads, double lr);

  const std::map<std::string, std::size_t>& step_counts() const { return counts_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::map<std::string, std::vector<double>> m_, v_;
  std::map<std::string, std::size_t> counts_;
};

/// Scales every gradient so the global L2 norm is at most max_norm. Returns
/// the norm before clipping.
double clip_global_norm(std::map<std::string, Tensor<float>>& grads, double max_norm);

struct TrainLogRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  LRSchedule schedule;
  std::map<std::string, std::size_t> step_counts;
};

class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& message, std::size_t step, std::size_t batch)
      : NumericError(message), step_(step), batch_(batch) {}
  std::size_t step() const { return step_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t step_;
  std::size_t batch_;
};

/// System tokens standing in for the chat preamble.
std::span<const int> system_tokens();

ModelInput model_input(const Instance& inst);

/// Minibatch next-token training of the trainable partition. Batch loss is
/// the mean of per-instance target losses. Throws TrainingAborted on a
/// non-finite loss or gradient.
TrainResult train(M2ptModel<float>& model, const ParamPartition& partition,
                  const std::vector<SyntheticTask>& tasks, const TrainConfig& config);

void write_metrics_csv(const std::string& path, const std::vector<TrainLogRow>& log);

}  // namespace m2pt
