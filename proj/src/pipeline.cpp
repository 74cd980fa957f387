#include "m2pt/pipeline.hpp"

namespace m2pt {

template <typename T>
M2ptModel<T>::M2ptModel(ModelSpec spec, PromptPlan plan, FusionOptions options)
    : spec_(spec),
      plan_(plan),
      options_(options),
      encoder_(spec.vision),
      llm_(spec.language),
      head_(spec.language.model_dim, spec.language.vocab_size) {
  plan_.validate();
}

template <typename T>
M2ptModel<T> M2ptModel<T>::create(const ModelSpec& spec, const PromptPlan& plan,
                                  const FusionOptions& options, std::uint64_t seed) {
  M2ptModel model(spec, plan, options);
  Rng encoder_rng(derive_seed(seed, "backbone.encoder"));
  Rng llm_rng(derive_seed(seed, "backbone.llm"));
  Rng head_rng(derive_seed(seed, "backbone.head"));
  Rng fusion_rng(derive_seed(seed, "fusion"));
  model.encoder_.register_params(model.params_, encoder_rng);
  model.llm_.register_params(model.params_, llm_rng);
  model.head_.register_params(model.params_, head_rng);
  InteractionLayer<T>(spec.vision.model_dim, spec.language.model_dim)
      .register_params(model.params_, fusion_rng);
  auto [visual, textual] = init_prompts<T>(plan, spec, seed);
  register_prompts(model.params_, visual, textual);
  return model;
}

template <typename T>
TokenSequence M2ptModel<T>::encode(ParamBinder<T>& bind, const Tensor<float>& image,
                                   ForwardTrace<T>* trace) const {
  TokenSequence seq = encoder_.patchify_embed(bind, image);
  const std::size_t layers = spec_.vision.num_layers;
  for (std::size_t i = 1; i <= layers; ++i) {
    seq = insert_visual_prompts(bind, i, seq);
    AttentionCapture<T>* capture = nullptr;
    if (trace != nullptr) {
      trace->encoder_input_lengths.push_back(seq.length());
      if (i == layers) {
        trace->encoder_last_tags = seq.tags;
        trace->encoder_attention.enabled = trace->capture_attention;
        capture = &trace->encoder_attention;
      }
    }
    seq = encoder_.layer_forward(bind, i, seq, capture);
  }
  return encoder_.output_norm(bind, seq);
}

template <typename T>
FusedSequence M2ptModel<T>::fuse(ParamBinder<T>& bind, const TokenSequence& encoded,
                                 std::span<const int> system, std::span<const int> instruction,
                                 std::span<const int> target) const {
  TokenSequence projected = project_vision(bind, encoded, options_.project_prompts);
  std::optional<Var> first_prompt;
  if (params_.contains(textual_prompt_name(1))) first_prompt = bind(textual_prompt_name(1));
  return assemble_llm_input(bind, llm_, first_prompt, system, projected, instruction, target);
}

template <typename T>
TokenSequence M2ptModel<T>::run_llm(ParamBinder<T>& bind, const FusedSequence& fused,
                                    ForwardTrace<T>* trace) const {
  TokenSequence seq = fused.sequence;
  const std::size_t layers = spec_.language.num_layers;
  for (std::size_t j = 1; j <= layers; ++j) {
    if (j > 1) seq = insert_textual_prompts(bind, j, seq);
    AttentionCapture<T>* capture = nullptr;
    if (trace != nullptr) {
      trace->llm_input_lengths.push_back(seq.length());
      if (j == layers) {
        trace->llm_last_tags = seq.tags;
        trace->llm_attention.enabled = trace->capture_attention;
        capture = &trace->llm_attention;
      }
    }
    seq = llm_.layer_forward(bind, j, seq, capture);
  }
  seq.embeddings = llm_.output_norm(bind, seq.embeddings);
  return seq;
}

template <typename T>
Var M2ptModel<T>::target_logits(ParamBinder<T>& bind, const ModelInput& input,
                                ForwardTrace<T>* trace) const {
  if (input.image == nullptr) throw StateError("model input has no image");
  if (input.target.empty()) throw EmptyLossError("model input has no target tokens");
  TokenSequence encoded = encode(bind, *input.image, trace);
  FusedSequence fused = fuse(bind, encoded, input.system, input.instruction, input.target);
  if (trace != nullptr) trace->fused_layout = fused.layout;
  TokenSequence hidden = run_llm(bind, fused, trace);
  const RegionLayout layout = RegionLayout::from_tags(hidden.tags);
  const RegionSpan& span = layout.span(Region::Target);
  if (span.begin == 0) {
    throw LayoutError("target region has no predecessor position");
  }
  Var rows = slice_rows(bind.tape(), hidden.embeddings, span.begin - 1, span.end - 1);
  return head_.logits(bind, rows);
}

template <typename T>
Var M2ptModel<T>::loss(ParamBinder<T>& bind, const ModelInput& input, ForwardTrace<T>* trace) const {
  Var logits = target_logits(bind, input, trace);
  const std::vector<std::uint8_t> mask(input.target.size(), 1);
  return cross_entropy(bind.tape(), logits, input.target, std::span<const std::uint8_t>(mask));
}

template <typename T>
std::vector<int> M2ptModel<T>::greedy_decode(const ModelInput& input, std::size_t max_new,
                                             int end_token,
                                             std::span<const int> stop_on_mismatch) const {
  if (input.image == nullptr) throw StateError("model input has no image");
  std::vector<int> generated;
  // The vision tower does not depend on generated tokens: run it once on a
  // separate tape and feed its output in as a constant.
  Tape<T> vision_tape;
  ParamBinder<T> vision_bind(vision_tape, params_);
  TokenSequence encoded = encode(vision_bind, *input.image);
  TokenSequence projected = project_vision(vision_bind, encoded, options_.project_prompts);
  const Tensor<T> projected_value = vision_tape.value(projected.embeddings);

  while (generated.size() < max_new) {
    const std::size_t prompt_len = params_.contains(textual_prompt_name(1)) ? plan_.textual_len : 0;
    const std::size_t total = prompt_len + input.system.size() + projected.length() +
                              input.instruction.size() + generated.size();
    if (total > spec_.language.max_seq_len) {
      throw CapacityError("decode needs " + std::to_string(total) +
                          " positions, exceeding max_seq_len " +
                          std::to_string(spec_.language.max_seq_len));
    }
    Tape<T> tape;
    ParamBinder<T> bind(tape, params_);
    TokenSequence vis{tape.constant(projected_value), projected.tags, false};
    std::optional<Var> first_prompt;
    if (params_.contains(textual_prompt_name(1))) first_prompt = bind(textual_prompt_name(1));
    FusedSequence fused =
        assemble_llm_input(bind, llm_, first_prompt, input.system, vis, input.instruction,
                           std::span<const int>(generated));
    TokenSequence hidden = run_llm(bind, fused);
    Var last = slice_rows(tape, hidden.embeddings, hidden.length() - 1, hidden.length());
    const int next = greedy_tokens(tape.value(head_.logits(bind, last)))[0];
    generated.push_back(next);
    if (next == end_token) break;
    const std::size_t k = generated.size() - 1;
    if (!stop_on_mismatch.empty() && (k >= stop_on_mismatch.size() || stop_on_mismatch[k] != next)) {
      break;
    }
  }
  return generated;
}

template class M2ptModel<float>;
template class M2ptModel<double>;

}  // namespace m2pt
