#include "m2pt/m2pt.h"

#include <cstring>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "m2pt/checkpoint.hpp"
#include "m2pt/experiments.hpp"

struct m2pt_config {
  m2pt::RunConfig value;
};

struct m2pt_session {
  m2pt::RunConfig config;
  m2pt::ExperimentData data;
  std::optional<m2pt::M2ptModel<float>> model;
  m2pt::ParamPartition partition;
};

namespace {

thread_local std::string g_last_error;

m2pt_status status_of(m2pt::ErrorKind kind) {
  using m2pt::ErrorKind;
  switch (kind) {
    case ErrorKind::Dimension: return M2PT_ERR_DIMENSION;
    case ErrorKind::Numeric: return M2PT_ERR_NUMERIC;
    case ErrorKind::Capacity: return M2PT_ERR_CAPACITY;
    case ErrorKind::Layout: return M2PT_ERR_LAYOUT;
    case ErrorKind::Registry: return M2PT_ERR_REGISTRY;
    case ErrorKind::Format: return M2PT_ERR_FORMAT;
    case ErrorKind::Config: return M2PT_ERR_CONFIG;
    case ErrorKind::Split: return M2PT_ERR_SPLIT;
    case ErrorKind::State: return M2PT_ERR_STATE;
    case ErrorKind::Io: return M2PT_ERR_IO;
    case ErrorKind::Usage: return M2PT_ERR_USAGE;
  }
  return M2PT_ERR_INTERNAL;
}

template <typename F>
m2pt_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return M2PT_OK;
  } catch (const m2pt::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return M2PT_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return M2PT_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw m2pt::UsageError(std::string(what) + " must not be null");
}

m2pt::M2ptModel<float>& session_model(m2pt_session* s) {
  if (!s->model) throw m2pt::StateError("session has no model");
  return *s->model;
}

}  // namespace

extern "C" {

const char* m2pt_last_error(void) { return g_last_error.c_str(); }

const char* m2pt_status_name(m2pt_status status) {
  switch (status) {
    case M2PT_OK: return "ok";
    case M2PT_ERR_DIMENSION: return "dimension error";
    case M2PT_ERR_NUMERIC: return "numeric error";
    case M2PT_ERR_CAPACITY: return "capacity error";
    case M2PT_ERR_LAYOUT: return "layout error";
    case M2PT_ERR_REGISTRY: return "registry error";
    case M2PT_ERR_FORMAT: return "format error";
    case M2PT_ERR_CONFIG: return "config error";
    case M2PT_ERR_SPLIT: return "split error";
    case M2PT_ERR_STATE: return "state error";
    case M2PT_ERR_IO: return "io error";
    case M2PT_ERR_USAGE: return "usage error";
    case M2PT_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

m2pt_status m2pt_config_new(m2pt_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new m2pt_config{};
  });
}

m2pt_status m2pt_config_load(const char* path, m2pt_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto cfg = std::make_unique<m2pt_config>(m2pt_config{m2pt::RunConfig::load(path)});
    *out = cfg.release();
  });
}

m2pt_status m2pt_config_parse(const char* text, m2pt_config** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    auto cfg = std::make_unique<m2pt_config>(m2pt_config{m2pt::RunConfig::parse(text)});
    *out = cfg.release();
  });
}

void m2pt_config_free(m2pt_config* config) { delete config; }

m2pt_status m2pt_config_set(m2pt_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    config->value.set(key, value);
  });
}

m2pt_status m2pt_config_get(const m2pt_config* config, const char* key, char* buf, size_t capacity,
                            size_t* needed) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    const std::string text = config->value.get(key);
    if (needed != nullptr) *needed = text.size() + 1;
    if (buf != nullptr && capacity > text.size()) std::memcpy(buf, text.c_str(), text.size() + 1);
  });
}

m2pt_status m2pt_config_validate(const m2pt_config* config) {
  return guarded([&] {
    require(config, "config");
    config->value.validate();
  });
}

m2pt_status m2pt_config_echo(const m2pt_config* config, char* buf, size_t capacity, size_t* needed) {
  return guarded([&] {
    require(config, "config");
    const std::string text = config->value.echo();
    if (needed != nullptr) *needed = text.size() + 1;
    if (buf != nullptr && capacity > text.size()) std::memcpy(buf, text.c_str(), text.size() + 1);
  });
}

m2pt_status m2pt_session_create(const m2pt_config* config, m2pt_session** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    config->value.validate();
    auto s = std::make_unique<m2pt_session>();
    s->config = config->value;
    s->data = m2pt::prepare_data(s->config);
    s->model.emplace(m2pt::build_model(s->config));
    s->partition = m2pt::partition_params(s->model->params(), s->config.partition_options());
    *out = s.release();
  });
}

void m2pt_session_free(m2pt_session* session) { delete session; }

m2pt_status m2pt_session_train(m2pt_session* session, const char* metrics_csv) {
  return guarded([&] {
    require(session, "session");
    const auto result = m2pt::train(session_model(session), session->partition, session->data.train_tasks,
                                    session->config.train_config());
    if (metrics_csv != nullptr) m2pt::write_metrics_csv(metrics_csv, result.log);
  });
}

m2pt_status m2pt_session_evaluate(m2pt_session* session, const char* eval_csv, double* mean_accuracy) {
  return guarded([&] {
    require(session, "session");
    const auto& model = session_model(session);
    const auto result = m2pt::evaluate_accuracy(m2pt::model_predictor(model, session->config.eval_max_new_tokens),
                                                session->data.split.unseen, &session->data.split.train);
    if (eval_csv != nullptr) m2pt::write_eval_csv(eval_csv, result);
    if (mean_accuracy != nullptr) *mean_accuracy = result.mean_accuracy;
  });
}

m2pt_status m2pt_session_save(const m2pt_session* session, const char* path) {
  return guarded([&] {
    require(session, "session");
    require(path, "path");
    if (!session->model) throw m2pt::StateError("session has no model");
    m2pt::save_checkpoint(path, session->model->params(), session->config.echo());
  });
}

m2pt_status m2pt_session_load(m2pt_session* session, const char* path) {
  return guarded([&] {
    require(session, "session");
    require(path, "path");
    m2pt::load_checkpoint(path, session_model(session).params());
  });
}

m2pt_status m2pt_session_trainable_params(const m2pt_session* session, uint64_t* count) {
  return guarded([&] {
    require(session, "session");
    require(count, "count");
    if (!session->model) throw m2pt::StateError("session has no model");
    *count = m2pt::count_trainable_elements(session->model->params(), session->partition);
  });
}

m2pt_status m2pt_session_write_splits(const m2pt_session* session, const char* directory) {
  return guarded([&] {
    require(session, "session");
    require(directory, "directory");
    const std::filesystem::path dir(directory);
    std::filesystem::create_directories(dir);
    m2pt::write_split_jsonl(dir / "split_train.jsonl", session->data.split.train);
    m2pt::write_split_jsonl(dir / "split_unseen.jsonl", session->data.split.unseen);
  });
}

m2pt_status m2pt_session_analyze_attention(const m2pt_session* session, uint64_t instance_seed,
                                           const char* directory) {
  return guarded([&] {
    require(session, "session");
    require(directory, "directory");
    if (!session->model) throw m2pt::StateError("session has no model");
    const m2pt::Instance* found = nullptr;
    for (const auto& task : session->data.suite) {
      for (const auto& inst : task.instances) {
        if (inst.seed == instance_seed) {
          found = &inst;
          break;
        }
      }
      if (found != nullptr) break;
    }
    if (found == nullptr) {
      throw m2pt::UsageError("no instance with seed " + std::to_string(instance_seed) +
                             " in the task suite (seeds are listed in the split files)");
    }
    m2pt::write_attention_report(directory, m2pt::extract_attention_report(*session->model, *found));
  });
}

m2pt_status m2pt_count_params(const m2pt_config* config, int paper_scale, m2pt_param_account* out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    const auto& cfg = config->value;
    m2pt::ParamAccount acc;
    if (paper_scale != 0) {
      acc = m2pt::count_params_ratio(m2pt::AccountDims::paper_scale(), cfg.prompt, m2pt::kPaperScaleBaseTotal,
                                     cfg.partition_options());
    } else {
      const auto model = m2pt::build_model(cfg);
      const auto part = m2pt::partition_params(model.params(), cfg.partition_options());
      double frozen = 0.0;
      for (const auto& name : part.frozen) frozen += static_cast<double>(model.params().get(name).size());
      acc = m2pt::count_params_ratio(m2pt::AccountDims::from(cfg.model), cfg.prompt, frozen,
                                     cfg.partition_options());
    }
    *out = m2pt_param_account{acc.visual_prompts, acc.textual_prompts, acc.interaction, acc.head,
                              acc.trainable(),    acc.base_total,      acc.ratio_of_base(),
                              acc.ratio_of_total()};
  });
}

m2pt_status m2pt_run_ablation(const m2pt_config* config, const char* drop, const char* csv_path) {
  return guarded([&] {
    require(config, "config");
    require(drop, "drop");
    require(csv_path, "csv_path");
    const auto d = m2pt::parse_drop(drop);
    if (!d) throw m2pt::UsageError(std::string("unknown component '") + drop + "' (visual, textual, interaction)");
    config->value.validate();
    m2pt::write_ablation_csv(csv_path, m2pt::ablate_components(config->value, {*d}));
  });
}

m2pt_status m2pt_run_locations(const m2pt_config* config, const char* csv_path) {
  return guarded([&] {
    require(config, "config");
    require(csv_path, "csv_path");
    config->value.validate();
    m2pt::write_location_csv(csv_path, m2pt::location_study(config->value));
  });
}

m2pt_status m2pt_run_grid(const m2pt_config* config, const double* lrs, size_t n_lrs, const uint64_t* lts,
                          size_t n_lts, const uint64_t* lvs, size_t n_lvs, const char* csv_path) {
  return guarded([&] {
    require(config, "config");
    require(csv_path, "csv_path");
    if ((n_lrs && !lrs) || (n_lts && !lts) || (n_lvs && !lvs)) throw m2pt::UsageError("grid axis pointer is null");
    config->value.validate();
    const std::vector<double> lr(lrs, lrs + n_lrs);
    const std::vector<std::size_t> lt(lts, lts + n_lts);
    const std::vector<std::size_t> lv(lvs, lvs + n_lvs);
    m2pt::write_grid_csv(csv_path, m2pt::grid_search(config->value, lr, lt, lv));
  });
}

m2pt_status m2pt_run_sweep_data(const m2pt_config* config, const double* fractions, size_t n, const char* csv_path) {
  return guarded([&] {
    require(config, "config");
    require(csv_path, "csv_path");
    if (n && !fractions) throw m2pt::UsageError("fractions pointer is null");
    config->value.validate();
    m2pt::write_sweep_csv(csv_path, m2pt::sweep_data(config->value, {fractions, fractions + n}));
  });
}

m2pt_status m2pt_run_sweep_epochs(const m2pt_config* config, const uint64_t* epochs, size_t n, const char* csv_path) {
  return guarded([&] {
    require(config, "config");
    require(csv_path, "csv_path");
    if (n && !epochs) throw m2pt::UsageError("epochs pointer is null");
    config->value.validate();
    m2pt::write_sweep_csv(csv_path, m2pt::sweep_epochs(config->value, {epochs, epochs + n}));
  });
}

m2pt_status m2pt_run_sweep_init(const m2pt_config* config, const char* csv_path) {
  return guarded([&] {
    require(config, "config");
    require(csv_path, "csv_path");
    config->value.validate();
    m2pt::write_sweep_csv(csv_path, m2pt::sweep_init(config->value));
  });
}

}  // extern "C"
