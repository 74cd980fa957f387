#pragma once

#include <optional>
#include <span>
#include <vector>

#include "m2pt/model.hpp"

namespace m2pt {

struct FusionOptions {
  /// Project final visual-prompt states along with image tokens. When false
  /// only image tokens reach the language model.
  bool project_prompts = true;
};

/// f_in: the tunable d_v → d_t linear map between the towers.
template <typename T>
class InteractionLayer {
 public:
  InteractionLayer(std::size_t vision_dim, std::size_t language_dim)
      : vision_dim_(vision_dim), language_dim_(language_dim) {}

  /// Xavier-uniform weight, zero bias.
  void register_params(ParameterStore<T>& store, Rng& rng) const;

  std::size_t vision_dim() const { return vision_dim_; }
  std::size_t language_dim() const { return language_dim_; }

  static constexpr const char* kWeight = "fusion.weight";
  static constexpr const char* kBias = "fusion.bias";

 private:
  std::size_t vision_dim_;
  std::size_t language_dim_;
};

/// Position-wise affine projection of encoder output into the LLM width.
/// Region tags are carried through; prompt positions are dropped first when
/// project_prompts is false.
template <typename T>
TokenSequence project_vision(ParamBinder<T>& bind, const TokenSequence& encoder_output,
                             bool project_prompts = true);

struct RegionSpan {
  Region region;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t width() const { return end - begin; }
};

/// Contiguous, ordered partition of [0, T) into the six regions. Absent
/// regions have zero width.
class RegionLayout {
 public:
  /// Throws LayoutError unless tags are grouped in kRegionOrder.
  static RegionLayout from_tags(std::span<const Region> tags);

  const RegionSpan& span(Region r) const { return spans_[static_cast<std::size_t>(r)]; }
  const std::array<RegionSpan, 6>& spans() const { return spans_; }
  std::size_t total() const { return spans_.back().end; }

 private:
  std::array<RegionSpan, 6> spans_{};
};

struct FusedSequence {
  TokenSequence sequence;
  RegionLayout layout;
  /// True exactly on Target positions.
  std::vector<std::uint8_t> loss_mask;
};

/// Layer-1 LLM input: [P_t^1 | system | projected vision | instruction | target].
/// LLM positions are added to the carried block (everything after P_t^1).
template <typename T>
FusedSequence assemble_llm_input(ParamBinder<T>& bind, const LanguageModel<T>& llm,
                                 std::optional<Var> textual_prompt, std::span<const int> system_tokens,
                                 const TokenSequence& projected_vision,
                                 std::span<const int> instruction_tokens,
                                 std::span<const int> target_tokens);

}  // namespace m2pt
