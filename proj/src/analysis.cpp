#include "m2pt/analysis.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace m2pt {

AccountDims AccountDims::from(const ModelSpec& spec) {
  return AccountDims{spec.vision.num_layers, spec.vision.model_dim, spec.language.num_layers,
                     spec.language.model_dim, spec.language.vocab_size};
}

AccountDims AccountDims::paper_scale() { return AccountDims{24, 1024, 32, 4096, 32000}; }

double ParamAccount::ratio_of_base() const {
  return base_total > 0.0 ? static_cast<double>(trainable()) / base_total : 0.0;
}

double ParamAccount::ratio_of_total() const {
  const double denom = base_total + static_cast<double>(trainable());
  return denom > 0.0 ? static_cast<double>(trainable()) / denom : 0.0;
}

std::string ParamAccount::percent(int decimals) const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << ratio_of_base() * 100.0 << '%';
  return os.str();
}

ParamAccount count_params_ratio(const AccountDims& dims, const PromptPlan& plan, double base_total,
                                const PartitionOptions& options) {
  if (dims.vision_layers == 0 || dims.vision_dim == 0 || dims.language_layers == 0 ||
      dims.language_dim == 0) {
    throw ConfigError("parameter accounting needs positive dimensions");
  }
  ParamAccount acc;
  acc.base_total = base_total;
  const auto sv = schedule_layers(plan.schedule, dims.vision_layers).size();
  const auto st = schedule_layers(plan.schedule, dims.language_layers).size();
  acc.visual_prompts = static_cast<std::uint64_t>(sv) * plan.visual_len * dims.vision_dim;
  acc.textual_prompts = static_cast<std::uint64_t>(st) * plan.textual_len * dims.language_dim;
  if (options.interaction_trainable) {
    acc.interaction = static_cast<std::uint64_t>(dims.vision_dim) * dims.language_dim + dims.language_dim;
  }
  if (options.head_trainable) {
    acc.head = static_cast<std::uint64_t>(dims.language_dim) * dims.vocab_size + dims.vocab_size;
  }
  return acc;
}

template <typename T>
std::uint64_t count_trainable_elements(const ParameterStore<T>& params, const ParamPartition& part) {
  std::uint64_t n = 0;
  for (const auto& [name, t] : params.entries()) {
    if (part.is_trainable(name)) n += t.size();
  }
  return n;
}

template std::uint64_t count_trainable_elements<float>(const ParameterStore<float>&, const ParamPartition&);
template std::uint64_t count_trainable_elements<double>(const ParameterStore<double>&, const ParamPartition&);

Predictor model_predictor(const M2ptModel<float>& model, std::size_t max_new_tokens) {
  return [&model, max_new_tokens](const Instance& inst, std::span<const int> gold) {
    ModelInput input{&inst.image, system_tokens(), inst.instruction, {}};
    return model.greedy_decode(input, max_new_tokens, tokens::kEnd, gold);
  };
}

EvalResult evaluate_accuracy(const Predictor& predict, const std::vector<SyntheticTask>& tasks,
                             const std::vector<SyntheticTask>* training) {
  if (training != nullptr) {
    for (const auto& t : tasks) {
      for (const auto& tr : *training) {
        if (t.task_id == tr.task_id) {
          throw StateError("task " + std::to_string(t.task_id) +
                           " is both evaluated and trained on; zero-shot evaluation requires disjoint tasks");
        }
      }
    }
  }
  EvalResult result;
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto& task : tasks) {
    TaskAccuracy acc;
    acc.task_id = task.task_id;
    for (const auto& inst : task.instances) {
      const std::vector<int> out = predict(inst, inst.target);
      acc.correct += out == inst.target ? 1 : 0;
      ++acc.total;
    }
    correct += acc.correct;
    total += acc.total;
    result.per_task.push_back(acc);
  }
  result.mean_accuracy = total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  return result;
}

void write_eval_csv(const std::string& path, const EvalResult& result) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << "task_id,correct,total,accuracy\n" << std::setprecision(10);
  for (const auto& t : result.per_task) {
    os << t.task_id << ',' << t.correct << ',' << t.total << ',' << t.accuracy() << '\n';
  }
  os << "mean,,," << result.mean_accuracy << '\n';
  if (!os) throw IoError("failed writing " + path);
}

AttentionMap summarize_attention(const Tensor<float>& mean_probs, const std::vector<Region>& tags) {
  const std::size_t n = tags.size();
  if (mean_probs.rank() != 2 || mean_probs.dim(0) != n || mean_probs.dim(1) != n) {
    throw DimensionError("attention map " + shape_to_string(mean_probs.shape()) + " does not match " +
                         std::to_string(n) + " tagged positions");
  }
  AttentionMap map;
  map.probs = mean_probs;
  map.tags = tags;
  std::vector<double> received(n, 0.0);
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t c = 0; c < n; ++c) received[c] += mean_probs.at(q, c);
  }
  for (double& r : received) r /= static_cast<double>(n);
  const RegionLayout layout = RegionLayout::from_tags(tags);
  for (const RegionSpan& span : layout.spans()) {
    if (span.width() == 0) continue;
    double total = 0.0;
    for (std::size_t c = span.begin; c < span.end; ++c) total += received[c];
    map.regions.push_back({span.region, span.width(), total / static_cast<double>(span.width())});
  }
  return map;
}

AttentionRegionReport attention_report_from_trace(const ForwardTrace<float>& trace) {
  if (!trace.capture_attention || trace.encoder_attention.mean_probs.empty() ||
      trace.llm_attention.mean_probs.empty()) {
    throw StateError("attention capture was not enabled for this forward pass");
  }
  return AttentionRegionReport{
      summarize_attention(trace.encoder_attention.mean_probs, trace.encoder_last_tags),
      summarize_attention(trace.llm_attention.mean_probs, trace.llm_last_tags)};
}

AttentionRegionReport extract_attention_report(const M2ptModel<float>& model, const Instance& inst) {
  Tape<float> tape;
  ParamBinder<float> bind(tape, model.params());
  ForwardTrace<float> trace;
  trace.capture_attention = true;
  model.target_logits(bind, model_input(inst), &trace);
  return attention_report_from_trace(trace);
}

namespace {

void write_matrix_csv(const std::filesystem::path& path, const Tensor<float>& m) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << std::setprecision(8);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) os << (c ? "," : "") << m.at(r, c);
    os << '\n';
  }
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace

void write_attention_report(const std::string& directory, const AttentionRegionReport& report) {
  const std::filesystem::path dir(directory);
  std::filesystem::create_directories(dir);
  write_matrix_csv(dir / "attention_encoder.csv", report.encoder.probs);
  write_matrix_csv(dir / "attention_llm.csv", report.llm.probs);
  std::ofstream os(dir / "attention_regions.csv");
  if (!os) throw IoError("cannot write region legend in " + directory);
  os << "map,region,begin,end,mean_received\n" << std::setprecision(10);
  for (const auto* m : {&report.encoder, &report.llm}) {
    const char* label = m == &report.encoder ? "encoder" : "llm";
    const RegionLayout layout = RegionLayout::from_tags(m->tags);
    for (const auto& r : m->regions) {
      const RegionSpan& s = layout.span(r.region);
      os << label << ',' << region_name(r.region) << ',' << s.begin << ',' << s.end << ','
         << r.mean_received << '\n';
    }
  }
  if (!os) throw IoError("failed writing region legend in " + directory);
}

}  // namespace m2pt
