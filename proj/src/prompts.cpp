#include "m2pt/prompts.hpp"

#include <cmath>

namespace m2pt {

const char* to_string(ScheduleVariant v) {
  switch (v) {
    case ScheduleVariant::FirstLayer: return "first";
    case ScheduleVariant::OddLayers: return "odd";
    case ScheduleVariant::TopHalf: return "top_half";
    case ScheduleVariant::LatterHalf: return "latter_half";
    case ScheduleVariant::All: return "all";
  }
  return "?";
}

std::optional<ScheduleVariant> parse_schedule(std::string_view text) {
  for (ScheduleVariant v : kAllSchedules) {
    if (text == to_string(v)) return v;
  }
  return std::nullopt;
}

std::vector<std::size_t> schedule_layers(ScheduleVariant variant, std::size_t num_layers) {
  if (num_layers < 1) {
    throw ConfigError("schedule_layers: num_layers must be at least 1");
  }
  const std::size_t half = (num_layers + 1) / 2;
  std::vector<std::size_t> out;
  switch (variant) {
    case ScheduleVariant::FirstLayer:
      out.push_back(1);
      break;
    case ScheduleVariant::OddLayers:
      for (std::size_t i = 1; i <= num_layers; i += 2) out.push_back(i);
      break;
    case ScheduleVariant::TopHalf:
      for (std::size_t i = 1; i <= half; ++i) out.push_back(i);
      break;
    case ScheduleVariant::LatterHalf:
      for (std::size_t i = half; i <= num_layers; ++i) out.push_back(i);
      break;
    case ScheduleVariant::All:
      for (std::size_t i = 1; i <= num_layers; ++i) out.push_back(i);
      break;
  }
  return out;
}

const char* to_string(InitPolicy::Kind k) {
  return k == InitPolicy::Kind::Xavier ? "xavier" : "normal";
}

std::optional<InitPolicy::Kind> parse_init(std::string_view text) {
  if (text == "xavier") return InitPolicy::Kind::Xavier;
  if (text == "normal") return InitPolicy::Kind::RandomNormal;
  return std::nullopt;
}

void PromptPlan::validate(bool allow_empty) const {
  if (!allow_empty && textual_len == 0 && visual_len == 0) {
    throw ConfigError("prompt plan has neither textual nor visual prompts");
  }
  if (init.kind == InitPolicy::Kind::RandomNormal && !(init.sigma > 0.0)) {
    throw ConfigError("prompt.init_sigma must be positive");
  }
}

std::string visual_prompt_name(std::size_t layer) {
  return "prompt.visual.layer" + std::to_string(layer);
}

std::string textual_prompt_name(std::size_t layer) {
  return "prompt.textual.layer" + std::to_string(layer);
}

double xavier_prompt_bound(std::size_t dim) {
  return std::sqrt(6.0 / (2.0 * static_cast<double>(dim)));
}

namespace {

template <typename T>
PromptSet<T> make_set(const InitPolicy& init, ScheduleVariant schedule, std::size_t num_layers,
                      std::size_t len, std::size_t dim, std::uint64_t seed) {
  PromptSet<T> set;
  if (len == 0) return set;
  Rng rng(seed);
  const double bound = xavier_prompt_bound(dim);
  for (std::size_t layer : schedule_layers(schedule, num_layers)) {
    Tensor<T> t = Tensor<T>::matrix(len, dim);
    for (auto& v : t.values()) {
      v = init.kind == InitPolicy::Kind::Xavier ? static_cast<T>(rng.uniform(-bound, bound))
                                                : static_cast<T>(rng.normal(0.0, init.sigma));
    }
    set.layers.emplace(layer, std::move(t));
  }
  return set;
}

}  // namespace

template <typename T>
std::pair<VisualPromptSet<T>, TextualPromptSet<T>> init_prompts(const PromptPlan& plan,
                                                                const ModelSpec& spec,
                                                                std::uint64_t seed) {
  plan.validate();
  return {make_set<T>(plan.init, plan.schedule, spec.vision.num_layers, plan.visual_len,
                      spec.vision.model_dim, derive_seed(seed, "prompt.visual")),
          make_set<T>(plan.init, plan.schedule, spec.language.num_layers, plan.textual_len,
                      spec.language.model_dim, derive_seed(seed, "prompt.textual"))};
}

template <typename T>
void register_prompts(ParameterStore<T>& store, const VisualPromptSet<T>& visual,
                      const TextualPromptSet<T>& textual) {
  for (const auto& [layer, t] : visual.layers) store.add(visual_prompt_name(layer), t);
  for (const auto& [layer, t] : textual.layers) store.add(textual_prompt_name(layer), t);
}

template <typename T>
TokenSequence replace_prompts(Tape<T>& tape, const TokenSequence& prev, Region prompt_tag,
                              std::optional<Var> fresh) {
  std::size_t leading = 0;
  while (leading < prev.length() && prev.tags[leading] == prompt_tag) ++leading;
  for (std::size_t i = leading; i < prev.length(); ++i) {
    if (prev.tags[i] == prompt_tag) {
      throw LayoutError(std::string(region_name(prompt_tag)) + " position " + std::to_string(i) +
                        " is not part of the leading prompt block");
    }
  }
  if (leading == 0 && !fresh) return prev;

  const std::size_t width = tape.value(prev.embeddings).cols();
  TokenSequence out;
  out.causal = prev.causal;
  std::vector<Var> parts;
  if (fresh) {
    const Tensor<T>& p = tape.value(*fresh);
    if (p.cols() != width) {
      throw DimensionError("prompt " + shape_to_string(p.shape()) + " does not match sequence width " +
                           std::to_string(width));
    }
    parts.push_back(*fresh);
    out.tags.assign(p.rows(), prompt_tag);
  }
  if (leading < prev.length()) {
    parts.push_back(leading == 0 ? prev.embeddings
                                 : slice_rows(tape, prev.embeddings, leading, prev.length()));
  }
  out.tags.insert(out.tags.end(), prev.tags.begin() + static_cast<std::ptrdiff_t>(leading),
                  prev.tags.end());
  if (parts.empty()) {
    throw LayoutError("sequence holds nothing but prompts");
  }
  out.embeddings = parts.size() == 1 ? parts[0] : concat_rows(tape, std::span<const Var>(parts));
  return out;
}

template <typename T>
TokenSequence insert_visual_prompts(ParamBinder<T>& bind, std::size_t layer,
                                    const TokenSequence& prev) {
  const std::string name = visual_prompt_name(layer);
  std::optional<Var> fresh;
  if (bind.store().contains(name)) fresh = bind(name);
  return replace_prompts(bind.tape(), prev, Region::VisualPrompt, fresh);
}

template <typename T>
TokenSequence insert_textual_prompts(ParamBinder<T>& bind, std::size_t layer,
                                     const TokenSequence& prev) {
  const std::string name = textual_prompt_name(layer);
  std::optional<Var> fresh;
  if (bind.store().contains(name)) fresh = bind(name);
  return replace_prompts(bind.tape(), prev, Region::TextualPrompt, fresh);
}

#define M2PT_INSTANTIATE_PROMPTS(T)                                                           \
  template std::pair<VisualPromptSet<T>, TextualPromptSet<T>> init_prompts<T>(                \
      const PromptPlan&, const ModelSpec&, std::uint64_t);                                    \
  template void register_prompts<T>(ParameterStore<T>&, const VisualPromptSet<T>&,            \
                                    const TextualPromptSet<T>&);                              \
  template TokenSequence replace_prompts<T>(Tape<T>&, const TokenSequence&, Region,           \
                                            std::optional<Var>);                              \
  template TokenSequence insert_visual_prompts<T>(ParamBinder<T>&, std::size_t,               \
                                                  const TokenSequence&);                      \
  template TokenSequence insert_textual_prompts<T>(ParamBinder<T>&, std::size_t,              \
                                                   const TokenSequence&);

M2PT_INSTANTIATE_PROMPTS(float)
M2PT_INSTANTIATE_PROMPTS(double)

}  // namespace m2pt
