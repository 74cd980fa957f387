#include "m2pt/fusion.hpp"

#include <cmath>

#include "m2pt/prompts.hpp"

namespace m2pt {

template <typename T>
void InteractionLayer<T>::register_params(ParameterStore<T>& store, Rng& rng) const {
  const double bound = std::sqrt(6.0 / static_cast<double>(vision_dim_ + language_dim_));
  Tensor<T> w = Tensor<T>::matrix(vision_dim_, language_dim_);
  for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  store.add(kWeight, std::move(w));
  store.add(kBias, Tensor<T>({language_dim_}));
}

template <typename T>
TokenSequence project_vision(ParamBinder<T>& bind, const TokenSequence& encoder_output,
                             bool project_prompts) {
  Tape<T>& tape = bind.tape();
  TokenSequence src = encoder_output;
  if (!project_prompts) {
    src = replace_prompts(tape, encoder_output, Region::VisualPrompt, std::nullopt);
  }
  // bind first: binding can grow the tape and move node storage
  const Var w = bind(InteractionLayer<T>::kWeight);
  const Var b = bind(InteractionLayer<T>::kBias);
  const Shape xs = tape.value(src.embeddings).shape();
  const Shape ws = tape.value(w).shape();
  if (xs.at(1) != ws.at(0)) {
    throw DimensionError("project_vision: encoder output " + shape_to_string(xs) +
                         " does not match interaction weight " + shape_to_string(ws));
  }
  Var y = linear(tape, src.embeddings, w, b);
  return TokenSequence{y, src.tags, false};
}

RegionLayout RegionLayout::from_tags(std::span<const Region> tags) {
  RegionLayout layout;
  std::size_t pos = 0;
  for (std::size_t k = 0; k < kRegionOrder.size(); ++k) {
    const std::size_t begin = pos;
    while (pos < tags.size() && tags[pos] == kRegionOrder[k]) ++pos;
    layout.spans_[k] = RegionSpan{kRegionOrder[k], begin, pos};
  }
  if (pos != tags.size()) {
    throw LayoutError(std::string("region ") + region_name(tags[pos]) + " at position " +
                      std::to_string(pos) + " breaks the region order");
  }
  return layout;
}

template <typename T>
FusedSequence assemble_llm_input(ParamBinder<T>& bind, const LanguageModel<T>& llm,
                                 std::optional<Var> textual_prompt, std::span<const int> system_tokens,
                                 const TokenSequence& projected_vision,
                                 std::span<const int> instruction_tokens,
                                 std::span<const int> target_tokens) {
  Tape<T>& tape = bind.tape();
  const std::size_t width = llm.spec().model_dim;
  if (tape.value(projected_vision.embeddings).cols() != width) {
    throw DimensionError("assemble_llm_input: projected vision " +
                         shape_to_string(tape.value(projected_vision.embeddings).shape()) +
                         " is not in the language width " + std::to_string(width));
  }
  const std::size_t prompt_len = textual_prompt ? tape.value(*textual_prompt).rows() : 0;
  const std::size_t total = prompt_len + system_tokens.size() + projected_vision.length() +
                            instruction_tokens.size() + target_tokens.size();
  if (total > llm.spec().max_seq_len) {
    throw CapacityError("fused sequence of " + std::to_string(total) +
                        " tokens exceeds max_seq_len " + std::to_string(llm.spec().max_seq_len));
  }

  std::vector<Var> parts;
  std::vector<Region> tags;
  if (!system_tokens.empty()) {
    parts.push_back(llm.embed_tokens(bind, system_tokens));
    tags.insert(tags.end(), system_tokens.size(), Region::SystemText);
  }
  if (projected_vision.length() > 0) {
    parts.push_back(projected_vision.embeddings);
    tags.insert(tags.end(), projected_vision.tags.begin(), projected_vision.tags.end());
  }
  if (!instruction_tokens.empty()) {
    parts.push_back(llm.embed_tokens(bind, instruction_tokens));
    tags.insert(tags.end(), instruction_tokens.size(), Region::Instruction);
  }
  if (!target_tokens.empty()) {
    parts.push_back(llm.embed_tokens(bind, target_tokens));
    tags.insert(tags.end(), target_tokens.size(), Region::Target);
  }
  if (parts.empty()) {
    throw LayoutError("assemble_llm_input: nothing to assemble");
  }
  Var carried = parts.size() == 1 ? parts[0] : concat_rows(tape, std::span<const Var>(parts));
  carried = llm.add_positions(bind, carried);

  TokenSequence seq =
      replace_prompts(tape, TokenSequence{carried, std::move(tags), true}, Region::TextualPrompt,
                      textual_prompt);
  FusedSequence fused;
  fused.layout = RegionLayout::from_tags(seq.tags);
  fused.loss_mask.resize(seq.length());
  for (std::size_t i = 0; i < seq.length(); ++i) {
    fused.loss_mask[i] = seq.tags[i] == Region::Target ? 1 : 0;
  }
  fused.sequence = std::move(seq);
  return fused;
}

#define M2PT_INSTANTIATE_FUSION(T)                                                              \
  template class InteractionLayer<T>;                                                           \
  template TokenSequence project_vision<T>(ParamBinder<T>&, const TokenSequence&, bool);        \
  template FusedSequence assemble_llm_input<T>(ParamBinder<T>&, const LanguageModel<T>&,         \
                                               std::optional<Var>, std::span<const int>,         \
                                               const TokenSequence&, std::span<const int>,       \
                                               std::span<const int>);

M2PT_INSTANTIATE_FUSION(float)
M2PT_INSTANTIATE_FUSION(double)

}  // namespace m2pt
