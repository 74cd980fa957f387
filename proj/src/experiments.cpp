#include "m2pt/experiments.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>

namespace m2pt {

ExperimentData prepare_data(const RunConfig& config) {
  ExperimentData data;
  data.suite = generate_task_suite(config.tasks, config.model.vision, config.model.language.vocab_size);
  data.split = split_train_zeroshot(data.suite, config.tasks.holdout_fraction, config.tasks.seed);
  data.train_tasks = config.data_fraction < 1.0
                         ? subsample(data.split.train, config.data_fraction, derive_seed(config.tasks.seed, "subsample"))
                         : data.split.train;
  return data;
}

M2ptModel<float> build_model(const RunConfig& config) {
  config.validate();
  return M2ptModel<float>::create(config.model, config.prompt, config.fusion_options(), config.seed);
}

RunOutcome run_experiment(const RunConfig& config, const ExperimentData& data) {
  M2ptModel<float> model = build_model(config);
  ParamPartition partition = partition_params(model.params(), config.partition_options());
  TrainResult trained = train(model, partition, data.train_tasks, config.train_config());
  EvalResult eval = evaluate_accuracy(model_predictor(model, config.eval_max_new_tokens), data.split.unseen,
                                      &data.split.train);
  const std::uint64_t n = count_trainable_elements(model.params(), partition);
  return RunOutcome{std::move(model), std::move(partition), std::move(trained), std::move(eval), n};
}

RunSummary summarize_run(const RunConfig& config, const ExperimentData& data) {
  RunSummary s;
  try {
    const RunOutcome out = run_experiment(config, data);
    s.accuracy = out.eval.mean_accuracy;
    s.trainable_params = out.trainable_params;
    s.final_loss = out.train.log.empty() ? 0.0 : out.train.log.back().loss;
  } catch (const TrainingAborted& e) {
    s.ok = false;
    s.error = e.what();
  }
  return s;
}

const char* to_string(DropComponent d) {
  switch (d) {
    case DropComponent::Visual: return "visual";
    case DropComponent::Textual: return "textual";
    case DropComponent::Interaction: return "interaction";
  }
  return "?";
}

std::optional<DropComponent> parse_drop(std::string_view text) {
  for (auto d : {DropComponent::Visual, DropComponent::Textual, DropComponent::Interaction}) {
    if (text == to_string(d)) return d;
  }
  return std::nullopt;
}

RunConfig ablated_config(const RunConfig& base, DropComponent drop) {
  RunConfig c = base;
  switch (drop) {
    case DropComponent::Visual: c.prompt.visual_len = 0; break;
    case DropComponent::Textual: c.prompt.textual_len = 0; break;
    case DropComponent::Interaction: c.interaction_trainable = false; break;
  }
  return c;
}

std::vector<AblationRow> ablate_components(const RunConfig& base, const std::vector<DropComponent>& drops) {
  if (base.prompt.textual_len == 0 || base.prompt.visual_len == 0 || !base.interaction_trainable) {
    throw ConfigError("ablation base must train visual prompts, textual prompts and the interaction layer");
  }
  const ExperimentData data = prepare_data(base);
  std::vector<AblationRow> rows;
  rows.push_back({"full", base, summarize_run(base, data)});
  for (DropComponent d : drops) {
    const RunConfig c = ablated_config(base, d);
    rows.push_back({to_string(d), c, summarize_run(c, data)});
  }
  return rows;
}

namespace {

std::ofstream open_csv(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << std::setprecision(10);
  return os;
}

void finish_csv(std::ofstream& os, const std::string& path) {
  os.flush();
  if (!os) throw IoError("failed writing " + path);
}

void put_summary(std::ostream& os, const RunSummary& s) {
  if (s.ok) {
    os << s.accuracy << ',' << s.trainable_params << ",ok";
  } else {
    os << ",,failed";
  }
}

}  // namespace

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
  auto os = open_csv(path);
  os << "variant,lt,lv,interaction_trainable,accuracy,trainable_params,status\n";
  for (const auto& r : rows) {
    os << r.variant << ',' << r.config.prompt.textual_len << ',' << r.config.prompt.visual_len << ','
       << (r.config.interaction_trainable ? "true" : "false") << ',';
    put_summary(os, r.summary);
    os << '\n';
  }
  finish_csv(os, path);
}

std::vector<LocationRow> location_study(const RunConfig& base) {
  const ExperimentData data = prepare_data(base);
  std::vector<LocationRow> rows;
  for (ScheduleVariant v : kAllSchedules) {
    RunConfig c = base;
    c.prompt.schedule = v;
    rows.push_back({v, summarize_run(c, data)});
  }
  return rows;
}

void write_location_csv(const std::string& path, const std::vector<LocationRow>& rows) {
  auto os = open_csv(path);
  os << "schedule,accuracy,trainable_params,status\n";
  for (const auto& r : rows) {
    os << to_string(r.schedule) << ',';
    put_summary(os, r.summary);
    os << '\n';
  }
  finish_csv(os, path);
}

void rank_grid(std::vector<GridRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const GridRow& a, const GridRow& b) {
    if (a.summary.ok != b.summary.ok) return a.summary.ok;
    if (!a.summary.ok) return false;
    if (a.summary.accuracy != b.summary.accuracy) return a.summary.accuracy > b.summary.accuracy;
    if (a.summary.trainable_params != b.summary.trainable_params) {
      return a.summary.trainable_params < b.summary.trainable_params;
    }
    return a.lr < b.lr;
  });
}

std::vector<GridRow> grid_search(const RunConfig& base, const std::vector<double>& lrs,
                                 const std::vector<std::size_t>& lts, const std::vector<std::size_t>& lvs) {
  if (lrs.empty() || lts.empty() || lvs.empty()) throw ConfigError("grid axes must be nonempty");
  const ExperimentData data = prepare_data(base);
  std::vector<GridRow> rows;
  for (double lr : lrs) {
    for (std::size_t lt : lts) {
      for (std::size_t lv : lvs) {
        RunConfig c = base;
        c.train.base_lr = lr;
        c.prompt.textual_len = lt;
        c.prompt.visual_len = lv;
        rows.push_back({lr, lt, lv, summarize_run(c, data)});
      }
    }
  }
  rank_grid(rows);
  return rows;
}

void write_grid_csv(const std::string& path, const std::vector<GridRow>& rows) {
  auto os = open_csv(path);
  os << "lr,lt,lv,accuracy,trainable_params,status\n";
  for (const auto& r : rows) {
    os << r.lr << ',' << r.lt << ',' << r.lv << ',';
    put_summary(os, r.summary);
    os << '\n';
  }
  finish_csv(os, path);
}

std::vector<SweepRow> sweep_data(const RunConfig& base, const std::vector<double>& fractions) {
  if (fractions.empty()) throw ConfigError("data sweep needs at least one fraction");
  std::vector<SweepRow> rows;
  for (double f : fractions) {
    RunConfig c = base;
    c.data_fraction = f;
    c.validate();
    rows.push_back({"data_fraction", c.get("tasks.data_fraction"), summarize_run(c, prepare_data(c))});
  }
  return rows;
}

std::vector<SweepRow> sweep_epochs(const RunConfig& base, const std::vector<std::size_t>& epochs) {
  if (epochs.empty()) throw ConfigError("epoch sweep needs at least one epoch count");
  const ExperimentData data = prepare_data(base);
  std::vector<SweepRow> rows;
  for (std::size_t e : epochs) {
    RunConfig c = base;
    c.train.epochs = e;
    rows.push_back({"epochs", std::to_string(e), summarize_run(c, data)});
  }
  return rows;
}

std::vector<SweepRow> sweep_init(const RunConfig& base) {
  const ExperimentData data = prepare_data(base);
  std::vector<SweepRow> rows;
  for (auto kind : {InitPolicy::Kind::Xavier, InitPolicy::Kind::RandomNormal}) {
    RunConfig c = base;
    c.prompt.init.kind = kind;
    rows.push_back({"init", to_string(kind), summarize_run(c, data)});
  }
  return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  auto os = open_csv(path);
  os << "setting,value,accuracy,trainable_params,status\n";
  for (const auto& r : rows) {
    os << r.setting << ',' << r.value << ',';
    put_summary(os, r.summary);
    os << '\n';
  }
  finish_csv(os, path);
}

}  // namespace m2pt
