#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "m2pt/model.hpp"

namespace m2pt {

/// Which layers receive fresh prompts.
enum class ScheduleVariant { FirstLayer, OddLayers, TopHalf, LatterHalf, All };

inline constexpr std::array<ScheduleVariant, 5> kAllSchedules = {
    ScheduleVariant::FirstLayer, ScheduleVariant::OddLayers, ScheduleVariant::TopHalf,
    ScheduleVariant::LatterHalf, ScheduleVariant::All};

const char* to_string(ScheduleVariant v);
std::optional<ScheduleVariant> parse_schedule(std::string_view text);

/// 1-based layer indices, ascending.
///   FirstLayer → {1}; OddLayers → {1,3,5,…}; TopHalf → {1..⌈n/2⌉};
///   LatterHalf → {⌈n/2⌉..n}; All → {1..n}.
std::vector<std::size_t> schedule_layers(ScheduleVariant variant, std::size_t num_layers);

struct InitPolicy {
  enum class Kind { Xavier, RandomNormal };
  Kind kind = Kind::Xavier;
  double sigma = 1.0;  // RandomNormal only
};

const char* to_string(InitPolicy::Kind k);
std::optional<InitPolicy::Kind> parse_init(std::string_view text);

struct PromptPlan {
  std::size_t textual_len = 10;
  std::size_t visual_len = 10;
  ScheduleVariant schedule = ScheduleVariant::All;
  InitPolicy init;

  /// Both lengths zero is only legal for ablations and baselines.
  void validate(bool allow_empty = true) const;
};

/// Prompt matrices keyed by scheduled layer index.
template <typename T>
struct PromptSet {
  std::map<std::size_t, Tensor<T>> layers;

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& [_, t] : layers) n += t.size();
    return n;
  }
};

template <typename T>
using VisualPromptSet = PromptSet<T>;
template <typename T>
using TextualPromptSet = PromptSet<T>;

std::string visual_prompt_name(std::size_t layer);
std::string textual_prompt_name(std::size_t layer);

/// Xavier-uniform bound for a prompt matrix with fan_in = fan_out = dim.
double xavier_prompt_bound(std::size_t dim);

/// Fresh prompt matrices for every scheduled layer of each tower. The
/// visual and textual sets draw from independent seed streams, so changing
/// one length never perturbs the other set.
template <typename T>
std::pair<VisualPromptSet<T>, TextualPromptSet<T>> init_prompts(const PromptPlan& plan,
                                                                const ModelSpec& spec,
                                                                std::uint64_t seed);

template <typename T>
void register_prompts(ParameterStore<T>& store, const VisualPromptSet<T>& visual,
                      const TextualPromptSet<T>& textual);

/// Replace step shared by both towers: strips the leading `prompt_tag`
/// positions of prev and prepends `fresh` when given.
template <typename T>
TokenSequence replace_prompts(Tape<T>& tape, const TokenSequence& prev, Region prompt_tag,
                              std::optional<Var> fresh);

/// Layer-i input for the vision encoder. The layer is scheduled iff the
/// store holds `prompt.visual.layer{i}`.
template <typename T>
TokenSequence insert_visual_prompts(ParamBinder<T>& bind, std::size_t layer,
                                    const TokenSequence& prev);

template <typename T>
TokenSequence insert_textual_prompts(ParamBinder<T>& bind, std::size_t layer,
                                     const TokenSequence& prev);

}  // namespace m2pt
