#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "m2pt/fusion.hpp"
#include "m2pt/prompts.hpp"

namespace m2pt {

/// One multimodal example as the model sees it.
struct ModelInput {
  const Tensor<float>* image = nullptr;
  std::span<const int> system;
  std::span<const int> instruction;
  std::span<const int> target;
};

/// Forward-pass bookkeeping, filled when requested.
template <typename T>
struct ForwardTrace {
  bool capture_attention = false;
  std::vector<std::size_t> encoder_input_lengths;
  std::vector<std::size_t> llm_input_lengths;
  std::vector<Region> encoder_last_tags;
  std::vector<Region> llm_last_tags;
  AttentionCapture<T> encoder_attention;
  AttentionCapture<T> llm_attention;
  std::optional<RegionLayout> fused_layout;
};

/// The full prompt-tuned multimodal model: frozen vision encoder and LLM,
/// per-layer visual/textual prompts, interaction layer, and LM head, with
/// every tensor held in one named registry.
template <typename T>
class M2ptModel {
 public:
  M2ptModel(ModelSpec spec, PromptPlan plan, FusionOptions options);

  /// Registers all parameters. Each component draws from its own stream
  /// derived from `seed`, so e.g. changing Lt leaves the backbone and the
  /// visual prompts untouched.
  static M2ptModel create(const ModelSpec& spec, const PromptPlan& plan,
                          const FusionOptions& options, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  const PromptPlan& plan() const { return plan_; }
  const FusionOptions& options() const { return options_; }
  const VisionEncoder<T>& encoder() const { return encoder_; }
  const LanguageModel<T>& llm() const { return llm_; }
  const LMHead<T>& head() const { return head_; }

  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }

  /// Vision tower with deep visual prompts, then the output norm.
  TokenSequence encode(ParamBinder<T>& bind, const Tensor<float>& image,
                       ForwardTrace<T>* trace = nullptr) const;

  /// Projects encoder output and lays out the layer-1 LLM input.
  FusedSequence fuse(ParamBinder<T>& bind, const TokenSequence& encoded, std::span<const int> system,
                     std::span<const int> instruction, std::span<const int> target) const;

  /// LLM stack with deep textual prompts; returns the normed final hidden
  /// states tagged with the last layer's input layout.
  TokenSequence run_llm(ParamBinder<T>& bind, const FusedSequence& fused,
                        ForwardTrace<T>* trace = nullptr) const;

  /// Logits for the rows that predict each target token, [|target|×V].
  Var target_logits(ParamBinder<T>& bind, const ModelInput& input,
                    ForwardTrace<T>* trace = nullptr) const;

  /// Next-token cross-entropy averaged over the target tokens.
  Var loss(ParamBinder<T>& bind, const ModelInput& input, ForwardTrace<T>* trace = nullptr) const;

  /// Greedy decode after the instruction. Stops at end_token, at max_new
  /// tokens, or (when `stop_on_mismatch` is given) at the first token that
  /// diverges from it.
  std::vector<int> greedy_decode(const ModelInput& input, std::size_t max_new, int end_token,
                                 std::span<const int> stop_on_mismatch = {}) const;

  template <typename U>
  M2ptModel<U> cast() const {
    M2ptModel<U> out(spec_, plan_, options_);
    out.params() = params_.template cast<U>();
    return out;
  }

 private:
  ModelSpec spec_;
  PromptPlan plan_;
  FusionOptions options_;
  VisionEncoder<T> encoder_;
  LanguageModel<T> llm_;
  LMHead<T> head_;
  ParameterStore<T> params_;
};

}  // namespace m2pt
