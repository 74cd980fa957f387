#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "m2pt/m2pt.h"

namespace fs = std::filesystem;

namespace {

struct CliFailure {
  int code;
  std::string message;
};

void check(m2pt_status st, const std::string& context) {
  if (st != M2PT_OK) {
    throw CliFailure{1, context + ": " + m2pt_status_name(st) + ": " + m2pt_last_error()};
  }
}

struct ConfigDeleter {
  void operator()(m2pt_config* c) const { m2pt_config_free(c); }
};
struct SessionDeleter {
  void operator()(m2pt_session* s) const { m2pt_session_free(s); }
};
using ConfigPtr = std::unique_ptr<m2pt_config, ConfigDeleter>;
using SessionPtr = std::unique_ptr<m2pt_session, SessionDeleter>;

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
  std::string out = "out";
};

ConfigPtr make_config(const GlobalOptions& g, const std::string& fallback_path = {}) {
  m2pt_config* raw = nullptr;
  const std::string path = !g.config_path.empty() ? g.config_path : fallback_path;
  if (!path.empty()) {
    check(m2pt_config_load(path.c_str(), &raw), "loading configuration");
  } else {
    check(m2pt_config_new(&raw), "creating configuration");
  }
  ConfigPtr cfg(raw);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw CliFailure{2, "--set expects key=value, got '" + kv + "'"};
    check(m2pt_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "--set " + kv);
  }
  if (g.seed >= 0) check(m2pt_config_set(cfg.get(), "run.seed", std::to_string(g.seed).c_str()), "--seed");
  check(m2pt_config_validate(cfg.get()), "configuration");
  return cfg;
}

std::string echo_of(const m2pt_config* cfg) {
  std::size_t needed = 0;
  check(m2pt_config_echo(cfg, nullptr, 0, &needed), "echoing configuration");
  std::string text(needed, '\0');
  check(m2pt_config_echo(cfg, text.data(), text.size(), &needed), "echoing configuration");
  text.resize(needed - 1);
  return text;
}

std::string config_value(const m2pt_config* cfg, const char* key) {
  std::size_t needed = 0;
  check(m2pt_config_get(cfg, key, nullptr, 0, &needed), key);
  std::string text(needed, '\0');
  check(m2pt_config_get(cfg, key, text.data(), text.size(), &needed), key);
  text.resize(needed - 1);
  return text;
}

fs::path prepare_out(const GlobalOptions& g, const m2pt_config* cfg) {
  const fs::path out(g.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw CliFailure{1, "cannot create output directory " + out.string() + ": " + ec.message()};
  std::ofstream os(out / "config.echo");
  os << echo_of(cfg);
  if (!os) throw CliFailure{1, "cannot write " + (out / "config.echo").string()};
  return out;
}

SessionPtr make_session(const m2pt_config* cfg) {
  m2pt_session* raw = nullptr;
  check(m2pt_session_create(cfg, &raw), "building model");
  return SessionPtr(raw);
}

void print_account_header() {
  std::printf("lt,lv,visual_prompts,textual_prompts,interaction,head,trainable,base_total,ratio,percent,percent_2dp,"
              "ratio_of_total\n");
}

std::string account_row(const std::string& lt, const std::string& lv, const m2pt_param_account& a) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%s,%s,%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%.17g,%.10g,%.4f%%,%.2f%%,%.10g\n",
                lt.c_str(), lv.c_str(), a.visual_prompts, a.textual_prompts, a.interaction, a.head, a.trainable,
                a.base_total, a.ratio_of_base, a.ratio_of_base * 100.0, a.ratio_of_base * 100.0, a.ratio_of_total);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal prompt tuning on synthetic instruction tasks"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_path, "Configuration file ([section] key = value)");
  app.add_option("--seed", g.seed, "Root seed (overrides run.seed)");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--set", g.overrides, "Override a configuration key, e.g. --set train.lr=1e-3");

  auto* train = app.add_subcommand("train", "Train prompts and interaction layer, then evaluate zero-shot");
  auto* eval = app.add_subcommand("eval", "Evaluate a trained checkpoint on the held-out tasks");
  std::string eval_checkpoint;
  eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint (default: <out>/checkpoint.m2pt)");

  auto* ablate = app.add_subcommand("ablate", "Drop one component and compare with the full model");
  std::string drop;
  ablate->add_option("--drop", drop, "Component to drop")
      ->required()
      ->check(CLI::IsMember({"visual", "textual", "interaction"}));

  auto* locations = app.add_subcommand("locations", "Compare prompt-layer schedules");

  auto* grid = app.add_subcommand("grid", "Grid search over lr, Lt, Lv");
  std::vector<double> lrs;
  std::vector<std::uint64_t> lts, lvs;
  grid->add_option("--lrs", lrs, "Learning rates")->required()->delimiter(',');
  grid->add_option("--lt", lts, "Textual prompt lengths")->required()->delimiter(',');
  grid->add_option("--lv", lvs, "Visual prompt lengths")->required()->delimiter(',');

  auto* sweep_data = app.add_subcommand("sweep-data", "Vary the training-data fraction");
  std::vector<double> fractions;
  sweep_data->add_option("--fractions", fractions, "Fractions in (0, 1]")->required()->delimiter(',');

  auto* sweep_epochs = app.add_subcommand("sweep-epochs", "Vary the number of epochs");
  std::vector<std::uint64_t> epochs;
  sweep_epochs->add_option("--epochs", epochs, "Epoch counts")->required()->delimiter(',');

  auto* sweep_init = app.add_subcommand("sweep-init", "Compare Xavier and random-normal prompt init");

  auto* count = app.add_subcommand("count-params", "Trainable-parameter accounting");
  bool paper_scale = false;
  count->add_flag("--paper-scale", paper_scale, "Use 24x1024 vision / 32x4096 language dims and a 7e9 base");

  auto* attention = app.add_subcommand("analyze-attention", "Dump last-layer attention maps for one instance");
  std::string att_checkpoint;
  std::uint64_t instance_seed = 0;
  attention->add_option("--checkpoint", att_checkpoint, "Trained checkpoint")->required();
  attention->add_option("--instance-seed", instance_seed, "Instance seed (see split_*.jsonl)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) {
      const auto cfg = make_config(g);
      const fs::path out = prepare_out(g, cfg.get());
      const auto session = make_session(cfg.get());
      check(m2pt_session_write_splits(session.get(), out.c_str()), "writing splits");
      check(m2pt_session_train(session.get(), (out / "metrics.csv").c_str()), "training");
      check(m2pt_session_save(session.get(), (out / "checkpoint.m2pt").c_str()), "saving checkpoint");
      double acc = 0.0;
      check(m2pt_session_evaluate(session.get(), (out / "train_eval.csv").c_str(), &acc), "evaluating");
      std::uint64_t n = 0;
      check(m2pt_session_trainable_params(session.get(), &n), "counting parameters");
      std::printf("trainable_params=%" PRIu64 "\naccuracy=%.10g\n", n, acc);
    } else if (*eval) {
      const fs::path dir(g.out);
      const fs::path echo = dir / "config.echo";
      const auto cfg = make_config(g, fs::exists(echo) ? echo.string() : std::string());
      const fs::path ck = eval_checkpoint.empty() ? dir / "checkpoint.m2pt" : fs::path(eval_checkpoint);
      const auto session = make_session(cfg.get());
      check(m2pt_session_load(session.get(), ck.c_str()), "loading checkpoint");
      const fs::path out = prepare_out(g, cfg.get());
      double acc = 0.0;
      check(m2pt_session_evaluate(session.get(), (out / "eval.csv").c_str(), &acc), "evaluating");
      std::printf("accuracy=%.10g\n", acc);
    } else if (*ablate) {
      const auto cfg = make_config(g);
      const fs::path out = prepare_out(g, cfg.get());
      check(m2pt_run_ablation(cfg.get(), drop.c_str(), (out / "ablation.csv").c_str()), "ablation");
    } else if (*locations) {
      const auto cfg = make_config(g);
      const fs::path out = prepare_out(g, cfg.get());
      check(m2pt_run_locations(cfg.get(), (out / "locations.csv").c_str()), "location study");
    } else if (*grid) {
      const auto cfg = make_config(g);
      const fs::path out = prepare_out(g, cfg.get());
      check(m2pt_run_grid(cfg.get(), lrs.data(), lrs.size(), lts.data(), lts.size(), lvs.data(), lvs.size(),
                          (out / "grid.csv").c_str()),
            "grid search");
    } else if (*sweep_data) {
      const auto cfg = make_config(g);
      const fs::path out = prepare_out(g, cfg.get());
      check(m2pt_run_sweep_data(cfg.get(), fractions.data(), fractions.size(), (out / "sweep_data.csv").c_str()),
            "data sweep");
    } else if (*sweep_epochs) {
      const auto cfg = make_config(g);
      const fs::path out = prepare_out(g, cfg.get());
      check(m2pt_run_sweep_epochs(cfg.get(), epochs.data(), epochs.size(), (out / "sweep_epochs.csv").c_str()),
            "epoch sweep");
    } else if (*sweep_init) {
      const auto cfg = make_config(g);
      const fs::path out = prepare_out(g, cfg.get());
      check(m2pt_run_sweep_init(cfg.get(), (out / "sweep_init.csv").c_str()), "init sweep");
    } else if (*count) {
      const auto cfg = make_config(g);
      const fs::path out = prepare_out(g, cfg.get());
      std::string table;
      auto add_row = [&](m2pt_config* c) {
        m2pt_param_account a{};
        check(m2pt_count_params(c, paper_scale ? 1 : 0, &a), "counting parameters");
        table += account_row(config_value(c, "prompt.textual_len"), config_value(c, "prompt.visual_len"), a);
      };
      if (paper_scale) {
        // Both reference rows: Lt=10 with Lv=10 and Lv=20.
        for (const char* lv : {"10", "20"}) {
          ConfigPtr c = make_config(g);
          check(m2pt_config_set(c.get(), "prompt.textual_len", "10"), "prompt.textual_len");
          check(m2pt_config_set(c.get(), "prompt.visual_len", lv), "prompt.visual_len");
          add_row(c.get());
        }
      } else {
        add_row(cfg.get());
      }
      print_account_header();
      std::fputs(table.c_str(), stdout);
      std::ofstream os(out / "params.csv");
      os << "lt,lv,visual_prompts,textual_prompts,interaction,head,trainable,base_total,ratio,percent,percent_2dp,"
            "ratio_of_total\n"
         << table;
      if (!os) throw CliFailure{1, "cannot write " + (out / "params.csv").string()};
    } else if (*attention) {
      const auto cfg = make_config(g);
      const fs::path out = prepare_out(g, cfg.get());
      const auto session = make_session(cfg.get());
      check(m2pt_session_load(session.get(), att_checkpoint.c_str()), "loading checkpoint");
      check(m2pt_session_analyze_attention(session.get(), instance_seed, out.c_str()), "attention analysis");
    }
  } catch (const CliFailure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return f.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
