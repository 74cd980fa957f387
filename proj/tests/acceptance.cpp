// Acceptance checks: one PASS/FAIL line per criterion.
//   m2pt_acceptance [N ...]     run the listed criteria (default: all)
#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "m2pt/checkpoint.hpp"
#include "m2pt/gradcheck.hpp"
#include "test_util.hpp"

using namespace m2pt;
using namespace m2pt::testing;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("m2pt_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string run_cli(const std::string& args, int* code) {
  const std::string cmd = std::string(M2PT_CLI_PATH) + " " + args + " 2>&1";
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) {
    *code = -1;
    return out;
  }
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) out += buf.data();
  const int status = pclose(pipe);
  *code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

// ---------------------------------------------------------------------------

Verdict c1_param_ratio() {
  const auto dir = scratch("c1");
  const auto t0 = Clock::now();
  int code = 0;
  const std::string out = run_cli("count-params --paper-scale --out " + dir.string(), &code);
  const double secs = seconds_since(t0);
  fs::remove_all(dir);
  if (code != 0) return {false, "count-params exited " + std::to_string(code) + ": " + out};
  // rows: lt,lv,...,percent,percent_2dp,...
  auto row_for = [&](const std::string& prefix) -> std::string {
    std::istringstream is(out);
    std::string line;
    while (std::getline(is, line)) {
      if (line.rfind(prefix, 0) == 0) return line;
    }
    return {};
  };
  const std::string r10 = row_for("10,10,");
  const std::string r20 = row_for("10,20,");
  const bool ok10 = r10.find(",0.0822%,0.08%,") != std::string::npos;
  const bool ok20 = r20.find(",0.0857%,0.09%,") != std::string::npos;
  const bool fast = secs < 1.0;
  return {ok10 && ok20 && fast, "Lt=10/Lv=10 -> " + std::string(ok10 ? "0.0822% (0.08%)" : "MISMATCH") +
                                    ", Lt=10/Lv=20 -> " + (ok20 ? "0.0857% (0.09%)" : "MISMATCH") +
                                    ", " + fmt(secs, 3) + " s"};
}

Verdict c2_gradients() {
  const auto t0 = Clock::now();
  const ModelSpec spec = toy_spec();
  auto model = M2ptModel<double>::create(spec, toy_plan(2, 2), {}, 3);
  const ParamPartition part = partition_params(model.params(), {});
  const ToyExample ex = toy_example(spec, 17);
  const ModelInput in = ex.input();
  LossBuilder<double> loss = [&](ParamBinder<double>& b) { return model.loss(b, in); };
  const GradCheckReport r = finite_diff_check<double>(loss, model.params(), part.trainable, 1e-5, 1e-4);
  std::size_t elems = 0;
  for (const auto& [_, c] : r.per_param) elems += c.elements;
  const double secs = seconds_since(t0);
  const bool covered = r.per_param.size() == part.trainable.size();
  return {r.max_rel_error < 1e-4 && covered && secs < 60.0,
          std::to_string(r.per_param.size()) + " tensors / " + std::to_string(elems) +
              " elements, max rel err " + fmt(r.max_rel_error, 3) + ", " + fmt(secs, 3) + " s"};
}

Verdict c3_freezing() {
  const auto t0 = Clock::now();
  RunConfig c;
  c.train.max_steps = 100;
  const ExperimentData data = prepare_data(c);
  auto model = build_model(c);
  const ParamPartition part = partition_params(model.params(), c.partition_options());
  const auto before = hashes(model.params());
  const TrainResult r = train(model, part, data.train_tasks, c.train_config());
  const auto after = hashes(model.params());
  std::size_t frozen_same = 0, trainable_changed = 0;
  for (const auto& [name, h] : before) {
    if (part.is_trainable(name)) {
      trainable_changed += after.at(name) != h;
    } else {
      frozen_same += after.at(name) == h;
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = r.log.size() == 100 && frozen_same == part.frozen.size() &&
                  trainable_changed == part.trainable.size() && secs < 120.0;
  return {ok, std::to_string(r.log.size()) + " steps, frozen unchanged " + std::to_string(frozen_same) + "/" +
                  std::to_string(part.frozen.size()) + ", trainable changed " + std::to_string(trainable_changed) +
                  "/" + std::to_string(part.trainable.size()) + ", " + fmt(secs, 3) + " s"};
}

// One tower, one schedule: walks the layers by hand and checks lengths,
// carry-through and the perturbation oracle.
template <typename Tower>
std::string check_tower(const std::string& label, const Tower& tower, std::size_t layers, std::size_t prompt_len,
                        const ParameterStore<double>& params, Region tag, TokenSequence (*insert)(ParamBinder<double>&, std::size_t, const TokenSequence&),
                        const std::function<TokenSequence(ParamBinder<double>&)>& start,
                        const std::function<std::string(std::size_t)>& prompt_name) {
  auto walk = [&](const ParameterStore<double>& store, std::size_t upto, std::vector<std::size_t>* lengths,
                  std::string* err) {
    Tape<double> tape;
    ParamBinder<double> b(tape, store);
    TokenSequence seq = start(b);
    Tensor<double> last;
    for (std::size_t i = 1; i <= upto; ++i) {
      const std::size_t carried = seq.length() - seq.count(tag);
      const TokenSequence in = insert(b, i, seq);
      const bool scheduled = store.contains(prompt_name(i));
      if (lengths) lengths->push_back(in.length());
      if (in.length() != (scheduled ? prompt_len : 0) + carried && err) {
        *err = label + " layer " + std::to_string(i) + " length " + std::to_string(in.length());
      }
      if (!scheduled && err) {
        // carried rows must be exactly the previous non-prompt rows
        const Tensor<double>& a = tape.value(in.embeddings);
        const Tensor<double>& p = tape.value(seq.embeddings);
        const std::size_t lead = seq.count(tag);
        for (std::size_t r = 0; r < in.length() && err->empty(); ++r) {
          for (std::size_t c = 0; c < a.cols(); ++c) {
            if (a.at(r, c) != p.at(r + lead, c)) {
              *err = label + " layer " + std::to_string(i) + " does not carry the non-prompt tokens";
              break;
            }
          }
        }
        if (in.count(tag) != 0) *err = label + " layer " + std::to_string(i) + " kept stale prompts";
      }
      seq = tower.layer_forward(b, i, in);
      if (i == upto) {
        const std::size_t lead = seq.count(tag);
        const Tensor<double>& v = tape.value(seq.embeddings);
        last = Tensor<double>::matrix(seq.length() - lead, v.cols());
        for (std::size_t r = lead; r < seq.length(); ++r)
          for (std::size_t c = 0; c < v.cols(); ++c) last.at(r - lead, c) = v.at(r, c);
      }
    }
    return last;
  };
  std::string err;
  std::vector<std::size_t> lengths;
  walk(params, layers, &lengths, &err);
  if (!err.empty()) return err;
  if (prompt_len == 0) return {};
  for (std::size_t i = 1; i <= layers; ++i) {
    if (!params.contains(prompt_name(i))) continue;
    const Tensor<double> base = walk(params, i, nullptr, nullptr);
    ParameterStore<double> moved = params;
    Rng rng(100 + i);
    for (auto& v : moved.get(prompt_name(i)).values()) v += rng.normal(0.0, 0.5);
    const Tensor<double> pert = walk(moved, i, nullptr, nullptr);
    double diff = 0.0;
    for (std::size_t k = 0; k < base.size(); ++k) diff += std::abs(base[k] - pert[k]);
    if (!(diff > 1e-8)) return label + " layer " + std::to_string(i) + " ignores its prompt";
  }
  return {};
}

Verdict c4_replace() {
  ModelSpec spec = toy_spec();
  spec.vision.num_layers = 5;
  spec.language.num_layers = 4;
  const ToyExample ex = toy_example(spec, 4);
  const Tensor<float>& image = ex.image;
  const std::vector<int>& system = ex.system;
  const std::vector<int>& instruction = ex.instruction;
  const std::vector<int>& target = ex.target;
  std::size_t layers_checked = 0;
  for (ScheduleVariant v : kAllSchedules) {
    auto model = M2ptModel<double>::create(spec, toy_plan(3, 4, v), {}, 5);
    std::string err = check_tower(
        std::string("vision/") + to_string(v), model.encoder(), spec.vision.num_layers, 4, model.params(),
        Region::VisualPrompt, &insert_visual_prompts<double>,
        [&](ParamBinder<double>& b) { return model.encoder().patchify_embed(b, image); }, visual_prompt_name);
    if (!err.empty()) return {false, err};
    // The LLM walk starts from the fused layer-1 input; layer 1's prompt is
    // placed by the assembler, so the walk re-applies the replace step.
    err = check_tower(
        std::string("language/") + to_string(v), model.llm(), spec.language.num_layers, 3, model.params(),
        Region::TextualPrompt, &insert_textual_prompts<double>,
        [&](ParamBinder<double>& b) {
          return model.fuse(b, model.encode(b, image), system, instruction, target).sequence;
        },
        textual_prompt_name);
    if (!err.empty()) return {false, err};
    layers_checked += spec.vision.num_layers + spec.language.num_layers;
  }
  return {true, std::to_string(kAllSchedules.size()) + " schedules, " + std::to_string(layers_checked) +
                    " layer inputs checked (lengths, carry-through, perturbation oracle)"};
}

Verdict c5_cross_modal() {
  RunConfig c;
  const ExperimentData data = prepare_data(c);
  const auto model = build_model(c);
  const ParamPartition part = partition_params(model.params(), c.partition_options());
  std::map<std::string, Tensor<float>> grads;
  for (std::size_t i = 0; i < 8; ++i) {
    const Instance& inst = data.train_tasks[i % data.train_tasks.size()].instances[i];
    Tape<float> tape;
    ParamBinder<float> b(tape, model.params(), &part.trainable);
    tape.backward(model.loss(b, model_input(inst)));
    b.accumulate_grads(grads, 1.0f / 8.0f);
  }
  double sq = 0.0;
  for (float g : grads.at(visual_prompt_name(1)).values()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);

  RunConfig ab = ablated_config(c, DropComponent::Interaction);
  ab.train.max_steps = 30;
  const auto init = hashes(build_model(ab).params());
  const RunOutcome out = run_experiment(ab, data);
  const auto after = hashes(out.model.params());
  const bool frozen = after.at("fusion.weight") == init.at("fusion.weight") &&
                      after.at("fusion.bias") == init.at("fusion.bias");
  const bool prompts_moved = after.at(visual_prompt_name(1)) != init.at(visual_prompt_name(1));
  return {norm > 0.0 && frozen && prompts_moved,
          "|dL/dP_v^1| = " + fmt(norm, 4) + "; drop=interaction after " + std::to_string(out.train.log.size()) +
              " steps: fusion " + (frozen ? "bitwise at init" : "CHANGED")};
}

Verdict c6_zero_shot() {
  const auto t0 = Clock::now();
  RunConfig base;  // 10 tasks × 200, 2 held out, task seed 7, 3 epochs
  const ExperimentData data = prepare_data(base);
  struct Arm {
    const char* name;
    std::size_t lt, lv;
  };
  const std::array<Arm, 4> arms = {{{"m2pt", 10, 10}, {"text", 10, 0}, {"vision", 0, 10}, {"frozen", 0, 0}}};
  std::size_t wins = 0;
  std::ostringstream table;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::array<double, 4> acc{};
    for (std::size_t a = 0; a < arms.size(); ++a) {
      RunConfig c = base;
      c.seed = seed;
      c.prompt.textual_len = arms[a].lt;
      c.prompt.visual_len = arms[a].lv;
      acc[a] = run_experiment(c, data).eval.mean_accuracy;
    }
    const bool ordered = acc[0] > std::max(acc[1], acc[2]) && std::max(acc[1], acc[2]) > acc[3];
    wins += ordered;
    std::printf("  seed %llu: m2pt %.4f  text %.4f  vision %.4f  frozen %.4f  %s\n",
                static_cast<unsigned long long>(seed), acc[0], acc[1], acc[2], acc[3], ordered ? "ordered" : "not ordered");
    std::fflush(stdout);
  }
  const double secs = seconds_since(t0);
  table << wins << "/5 seeds ordered, " << fmt(secs / 60.0, 3) << " min";
  return {wins >= 4 && secs < 30.0 * 60.0, table.str()};
}

Verdict c7_schedules() {
  auto seq = [](std::size_t lo, std::size_t hi, std::size_t step) {
    std::vector<std::size_t> v;
    for (std::size_t i = lo; i <= hi; i += step) v.push_back(i);
    return v;
  };
  const std::vector<std::size_t> odd24 = {1, 3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23};
  const std::vector<std::size_t> top32 = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16};
  const std::vector<std::size_t> latter24 = {12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24};
  const bool ok = schedule_layers(ScheduleVariant::OddLayers, 24) == odd24 &&
                  schedule_layers(ScheduleVariant::TopHalf, 32) == top32 &&
                  schedule_layers(ScheduleVariant::LatterHalf, 24) == latter24 &&
                  schedule_layers(ScheduleVariant::FirstLayer, 24) == std::vector<std::size_t>{1} &&
                  schedule_layers(ScheduleVariant::All, 32) == seq(1, 32, 1);
  return {ok, "OddLayers(24), TopHalf(32), LatterHalf(24), FirstLayer(24), All(32) against hand-listed sets"};
}

Verdict c8_attention() {
  RunConfig base;
  const ExperimentData data = prepare_data(base);
  double worst_row = 0.0, worst_region = 0.0;
  std::size_t maps = 0;
  for (auto [lt, lv] : {std::pair<std::size_t, std::size_t>{10, 10}, {0, 10}, {10, 0}, {0, 0}, {3, 7}}) {
    RunConfig c = base;
    c.prompt.textual_len = lt;
    c.prompt.visual_len = lv;
    const auto model = build_model(c);
    for (std::size_t k = 0; k < 3; ++k) {
      const Instance& inst = data.split.unseen[k % data.split.unseen.size()].instances[k];
      const AttentionRegionReport rep = extract_attention_report(model, inst);
      for (const AttentionMap* m : {&rep.encoder, &rep.llm}) {
        ++maps;
        const std::size_t n = m->tags.size();
        for (std::size_t r = 0; r < n; ++r) {
          double s = 0.0;
          for (std::size_t col = 0; col < n; ++col) s += m->probs.at(r, col);
          worst_row = std::max(worst_row, std::abs(s - 1.0));
        }
        double w = 0.0;
        std::set<Region> present;
        for (const auto& reg : m->regions) {
          w += static_cast<double>(reg.width) * reg.mean_received;
          present.insert(reg.region);
        }
        worst_region = std::max(worst_region, std::abs(w - 1.0));
        const bool is_llm = m == &rep.llm;
        const bool inventory = present.count(Region::VisualPrompt) == (lv > 0 ? 1u : 0u) &&
                               (!is_llm || present.count(Region::TextualPrompt) == (lt > 0 ? 1u : 0u)) &&
                               present.count(Region::ImageTokens) == 1 &&
                               (!is_llm || (present.count(Region::SystemText) == 1 &&
                                            present.count(Region::Instruction) == 1));
        if (!inventory) {
          return {false, "region inventory mismatch for Lt=" + std::to_string(lt) + " Lv=" + std::to_string(lv)};
        }
      }
    }
  }
  return {worst_row < 1e-5 && worst_region < 1e-4,
          std::to_string(maps) + " maps, max |row sum - 1| " + fmt(worst_row, 3) + ", max |region sum - 1| " +
              fmt(worst_region, 3) + ", inventories match"};
}

Verdict c9_lr() {
  const LRSchedule s = LRSchedule::make(1000, 0.03);
  const double a = lr_at_step(s, 7e-4, 14);
  const double b = lr_at_step(s, 7e-4, 30);
  const double z = lr_at_step(s, 7e-4, 1000);
  bool mono = true;
  for (std::size_t t = 31; t <= 1000; ++t) mono = mono && lr_at_step(s, 7e-4, t) <= lr_at_step(s, 7e-4, t - 1);
  return {s.warmup_steps == 30 && std::abs(a - 3.5e-4) < 1e-15 && std::abs(b - 7e-4) < 1e-15 && z == 0.0 && mono,
          "W=" + std::to_string(s.warmup_steps) + ", lr(14)=" + fmt(a, 17) + ", lr(30)=" + fmt(b, 17) +
              ", lr(1000)=" + fmt(z) + ", monotone on [30,1000]: " + (mono ? "yes" : "no")};
}

Verdict c10_determinism() {
  RunConfig c;
  c.train.max_steps = 20;
  const ExperimentData data = prepare_data(c);
  auto train_bytes = [&] {
    auto m = build_model(c);
    train(m, partition_params(m.params(), c.partition_options()), data.train_tasks, c.train_config());
    return encode_checkpoint(m.params(), c.echo());
  };
  const auto a = train_bytes();
  const auto b = train_bytes();
  const auto dir = scratch("c10");
  save_checkpoint(dir / "a.m2pt", decode_checkpoint(a).params, c.echo());
  auto m = build_model(c);
  const std::string echo = load_checkpoint(dir / "a.m2pt", m.params());
  save_checkpoint(dir / "b.m2pt", m.params(), echo);
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  };
  const auto fa = slurp(dir / "a.m2pt");
  const auto fb = slurp(dir / "b.m2pt");
  fs::remove_all(dir);
  const bool same_seed = a == b;
  const bool round_trip = fa == fb && fa == a;
  return {same_seed && round_trip, "same-seed checkpoints " + std::string(same_seed ? "identical" : "DIFFER") + " (" +
                                       std::to_string(a.size()) + " bytes), save-load-save " +
                                       (round_trip ? "byte-identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Verdict()>>> criteria = {
      {1, {"parameter ratio", c1_param_ratio}},
      {2, {"gradient fidelity", c2_gradients}},
      {3, {"freezing invariant", c3_freezing}},
      {4, {"deep-prompt replace semantics", c4_replace}},
      {5, {"cross-modal gradient flow", c5_cross_modal}},
      {6, {"zero-shot ordering", c6_zero_shot}},
      {7, {"schedule sets", c7_schedules}},
      {8, {"attention conservation", c8_attention}},
      {9, {"lr schedule", c9_lr}},
      {10, {"determinism and round trip", c10_determinism}},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::stoi(argv[i]));
  if (selected.empty()) {
    for (const auto& [k, _] : criteria) selected.push_back(k);
  }
  int failures = 0;
  for (int k : selected) {
    const auto it = criteria.find(k);
    if (it == criteria.end()) {
      std::fprintf(stderr, "unknown criterion %d\n", k);
      return 2;
    }
    Verdict v;
    try {
      v = it->second.second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("criterion %d (%s): %s - %s\n", k, it->second.first, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
