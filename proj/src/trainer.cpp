#include "m2pt/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "m2pt/rng.hpp"

namespace m2pt {

namespace {

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

template <typename T>
ParamPartition partition_params(const ParameterStore<T>& params, const PartitionOptions& options) {
  ParamPartition part;
  for (const std::string& name : params.names()) {
    bool trainable = false;
    if (starts_with(name, "prompt.visual.") || starts_with(name, "prompt.textual.")) {
      trainable = true;
    } else if (starts_with(name, "fusion.")) {
      trainable = options.interaction_trainable;
    } else if (starts_with(name, "head.")) {
      trainable = options.head_trainable;
    } else if (starts_with(name, "encoder.") || starts_with(name, "llm.")) {
      trainable = false;
    } else {
      throw RegistryError("parameter '" + name + "' belongs to no known component");
    }
    (trainable ? part.trainable : part.frozen).insert(name);
  }
  return part;
}

template ParamPartition partition_params<float>(const ParameterStore<float>&, const PartitionOptions&);
template ParamPartition partition_params<double>(const ParameterStore<double>&, const PartitionOptions&);

void TrainConfig::validate() const {
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ConfigError("train.lr must be positive and finite");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw ConfigError("train.warmup_ratio must lie in [0, 1)");
  if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be nonnegative");
  if (!(clip_norm > 0.0)) throw ConfigError("train.clip_norm must be positive");
}

LRSchedule LRSchedule::make(std::size_t total_steps, double warmup_ratio) {
  LRSchedule s;
  s.total_steps = total_steps;
  s.warmup_steps = static_cast<std::size_t>(std::llround(warmup_ratio * static_cast<double>(total_steps)));
  if (total_steps > 0 && s.warmup_steps >= total_steps) s.warmup_steps = total_steps - 1;
  return s;
}

double lr_at_step(const LRSchedule& schedule, double base_lr, std::size_t step) {
  const std::size_t w = schedule.warmup_steps;
  const std::size_t t = schedule.total_steps;
  if (step < w) {
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(w);
  }
  if (t <= w) return base_lr;
  if (step >= t) return 0.0;
  const double progress = static_cast<double>(step - w) / static_cast<double>(t - w);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void AdamW::step(ParameterStore<float>& params, const std::set<std::string>& trainable,
                 const std::map<std::string, Tensor<float>>& grads, double lr) {
  for (const std::string& name : trainable) {
    Tensor<float>& p = params.get(name);
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    const std::size_t t = ++counts_[name];
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
    const auto g_it = grads.find(name);
    const Tensor<float>* g = g_it == grads.end() ? nullptr : &g_it->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g != nullptr ? static_cast<double>((*g)[i]) : 0.0;
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
      const double decayed = static_cast<double>(p[i]) * (1.0 - lr * weight_decay_);
      p[i] = static_cast<float>(decayed - lr * update);
    }
  }
}

double clip_global_norm(std::map<std::string, Tensor<float>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, g] : grads) {
    for (float v : g.values()) sq += static_cast<double>(v) * v;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const auto factor = static_cast<float>(max_norm / norm);
    for (auto& [_, g] : grads) {
      for (float& v : g.values()) v *= factor;
    }
  }
  return norm;
}

std::span<const int> system_tokens() { return tokens::kSystem; }

ModelInput model_input(const Instance& inst) {
  return ModelInput{&inst.image, system_tokens(), inst.instruction, inst.target};
}

TrainResult train(M2ptModel<float>& model, const ParamPartition& partition,
                  const std::vector<SyntheticTask>& tasks, const TrainConfig& config) {
  config.validate();
  std::vector<const Instance*> data;
  for (const auto& task : tasks) {
    for (const auto& inst : task.instances) data.push_back(&inst);
  }
  if (data.empty()) throw SplitError("training set is empty");

  const std::size_t steps_per_epoch = (data.size() + config.batch_size - 1) / config.batch_size;
  std::size_t total = steps_per_epoch * config.epochs;
  if (config.max_steps > 0) total = std::min(total, config.max_steps);

  TrainResult result;
  result.schedule = LRSchedule::make(total, config.warmup_ratio);
  AdamW optimizer(0.9, 0.999, 1e-8, config.weight_decay);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs && step < total; ++epoch) {
    std::vector<const Instance*> order = data;
    Rng rng(derive_seed(config.seed, "shuffle.epoch" + std::to_string(epoch)));
    rng.shuffle(order.begin(), order.end());
    for (std::size_t b = 0; b < steps_per_epoch && step < total; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const float weight = 1.0f / static_cast<float>(end - begin);
      std::map<std::string, Tensor<float>> grads;
      double batch_loss = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        Tape<float> tape;
        ParamBinder<float> bind(tape, model.params(), &partition.trainable);
        Var loss = model.loss(bind, model_input(*order[i]));
        const double value = tape.value(loss)[0];
        if (!std::isfinite(value)) {
          std::ostringstream msg;
          msg << "non-finite loss at step " << step << " (epoch " << epoch << ", batch " << b
              << ", task " << order[i]->task_id << ", instance seed " << order[i]->seed << ")";
          throw TrainingAborted(msg.str(), step, b);
        }
        batch_loss += value;
        tape.backward(loss);
        bind.accumulate_grads(grads, weight);
      }
      const double norm = clip_global_norm(grads, config.clip_norm);
      if (!std::isfinite(norm)) {
        std::ostringstream msg;
        msg << "non-finite gradient norm at step " << step << " (epoch " << epoch << ", batch " << b << ")";
        throw TrainingAborted(msg.str(), step, b);
      }
      const double lr = lr_at_step(result.schedule, config.base_lr, step);
      optimizer.step(model.params(), partition.trainable, grads, lr);
      result.log.push_back({step, epoch, lr, batch_loss / static_cast<double>(end - begin)});
      ++step;
    }
  }
  result.step_counts = optimizer.step_counts();
  return result;
}

void write_metrics_csv(const std::string& path, const std::vector<TrainLogRow>& log) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << "step,epoch,lr,loss\n";
  os << std::setprecision(10);
  for (const auto& row : log) {
    os << row.step << ',' << row.epoch << ',' << row.lr << ',' << row.loss << '\n';
  }
  if (!os) throw IoError("failed writing " + path);
}

}  // namespace m2pt
