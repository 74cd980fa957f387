#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "m2pt/analysis.hpp"
#include "m2pt/config.hpp"

namespace m2pt {

/// Suite, task split and the (possibly subsampled) training mixture.
struct ExperimentData {
  std::vector<SyntheticTask> suite;
  TaskSplit split;
  std::vector<SyntheticTask> train_tasks;
};

ExperimentData prepare_data(const RunConfig& config);

M2ptModel<float> build_model(const RunConfig& config);

struct RunOutcome {
  M2ptModel<float> model;
  ParamPartition partition;
  TrainResult train;
  EvalResult eval;
  std::uint64_t trainable_params = 0;
};

/// Validates, builds, trains on the training mixture and evaluates on the
/// held-out tasks.
RunOutcome run_experiment(const RunConfig& config, const ExperimentData& data);

struct RunSummary {
  bool ok = true;
  std::string error;
  double accuracy = 0.0;
  std::uint64_t trainable_params = 0;
  double final_loss = 0.0;
};

/// run_experiment with TrainingAborted turned into a failed summary.
RunSummary summarize_run(const RunConfig& config, const ExperimentData& data);

enum class DropComponent { Visual, Textual, Interaction };
const char* to_string(DropComponent d);
std::optional<DropComponent> parse_drop(std::string_view text);

/// drop=visual: Lv=0; textual: Lt=0; interaction: fusion frozen at init.
RunConfig ablated_config(const RunConfig& base, DropComponent drop);

struct AblationRow {
  std::string variant;  // "full" or the dropped component
  RunConfig config;
  RunSummary summary;
};

/// The full run followed by one row per requested drop.
std::vector<AblationRow> ablate_components(const RunConfig& base, const std::vector<DropComponent>& drops);
void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

struct LocationRow {
  ScheduleVariant schedule;
  RunSummary summary;
};

std::vector<LocationRow> location_study(const RunConfig& base);
void write_location_csv(const std::string& path, const std::vector<LocationRow>& rows);

struct GridRow {
  double lr = 0.0;
  std::size_t lt = 0;
  std::size_t lv = 0;
  RunSummary summary;
};

/// Every cell shares the base seed. Successful rows come first, sorted by
/// accuracy (desc), then trainable params (asc), then lr (asc); failed cells
/// follow in grid order.
std::vector<GridRow> grid_search(const RunConfig& base, const std::vector<double>& lrs,
                                 const std::vector<std::size_t>& lts, const std::vector<std::size_t>& lvs);
void rank_grid(std::vector<GridRow>& rows);
void write_grid_csv(const std::string& path, const std::vector<GridRow>& rows);

struct SweepRow {
  std::string setting;
  std::string value;
  RunSummary summary;
};

std::vector<SweepRow> sweep_data(const RunConfig& base, const std::vector<double>& fractions);
std::vector<SweepRow> sweep_epochs(const RunConfig& base, const std::vector<std::size_t>& epochs);
std::vector<SweepRow> sweep_init(const RunConfig& base);
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

}  // namespace m2pt
