#include "m2pt/model.hpp"

#include <cmath>

namespace m2pt {

const char* region_name(Region region) {
  switch (region) {
    case Region::TextualPrompt: return "textual_prompt";
    case Region::SystemText: return "system_text";
    case Region::VisualPrompt: return "visual_prompt";
    case Region::ImageTokens: return "image_tokens";
    case Region::Instruction: return "instruction";
    case Region::Target: return "target";
  }
  return "unknown";
}

void VisionEncoderSpec::validate() const {
  if (num_layers < 1) throw ConfigError("vision.layers must be at least 1");
  if (num_heads < 1 || model_dim % num_heads != 0) {
    throw ConfigError("vision.dim (" + std::to_string(model_dim) +
                      ") must be divisible by vision.heads (" + std::to_string(num_heads) + ")");
  }
  if (patch_rows < 1 || patch_cols < 1) throw ConfigError("vision patch grid must be nonempty");
  if (patch_dim < 1) throw ConfigError("vision.patch_dim must be at least 1");
}

void LanguageModelSpec::validate() const {
  if (num_layers < 1) throw ConfigError("language.layers must be at least 1");
  if (num_heads < 1 || model_dim % num_heads != 0) {
    throw ConfigError("language.dim (" + std::to_string(model_dim) +
                      ") must be divisible by language.heads (" + std::to_string(num_heads) + ")");
  }
  if (vocab_size < 2) throw ConfigError("language.vocab must be at least 2");
  if (max_seq_len < 1) throw ConfigError("language.max_seq_len must be at least 1");
}

std::size_t TokenSequence::count(Region r) const {
  return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), r));
}

namespace {

template <typename T>
Tensor<T> normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor<T> t = Tensor<T>::matrix(rows, cols);
  for (auto& v : t.values()) v = static_cast<T>(rng.normal(0.0, stddev));
  return t;
}

template <typename T>
void register_linear(ParameterStore<T>& store, const std::string& prefix, std::size_t in,
                     std::size_t out, Rng& rng, double gain = 1.0) {
  store.add(prefix + ".weight", normal_matrix<T>(in, out, gain / std::sqrt(double(in)), rng));
  store.add(prefix + ".bias", Tensor<T>({out}));
}

template <typename T>
void register_norm(ParameterStore<T>& store, const std::string& prefix, std::size_t dim) {
  store.add(prefix + ".gain", Tensor<T>({dim}, T(1)));
  store.add(prefix + ".bias", Tensor<T>({dim}));
}

template <typename T>
Var apply_linear(ParamBinder<T>& bind, const std::string& prefix, Var x) {
  return linear(bind.tape(), x, bind(prefix + ".weight"), bind(prefix + ".bias"));
}

template <typename T>
Var apply_norm(ParamBinder<T>& bind, const std::string& prefix, Var x) {
  return layer_norm(bind.tape(), x, bind(prefix + ".gain"), bind(prefix + ".bias"));
}

}  // namespace

template <typename T>
void register_block(ParameterStore<T>& store, const std::string& prefix, std::size_t dim, Rng& rng) {
  register_norm(store, prefix + ".ln1", dim);
  // q/k at twice the fan-in scale: sharper attention maps in a random backbone
  register_linear(store, prefix + ".attn.q", dim, dim, rng, 2.0);
  register_linear(store, prefix + ".attn.k", dim, dim, rng, 2.0);
  register_linear(store, prefix + ".attn.v", dim, dim, rng);
  register_linear(store, prefix + ".attn.out", dim, dim, rng);
  register_norm(store, prefix + ".ln2", dim);
  register_linear(store, prefix + ".mlp.fc1", dim, 4 * dim, rng);
  register_linear(store, prefix + ".mlp.fc2", 4 * dim, dim, rng);
}

template <typename T>
Var block_forward(ParamBinder<T>& bind, const std::string& prefix, Var x, std::size_t num_heads,
                  bool causal, AttentionCapture<T>* capture) {
  Tape<T>& tape = bind.tape();
  Var h = apply_norm(bind, prefix + ".ln1", x);
  Var q = apply_linear(bind, prefix + ".attn.q", h);
  Var k = apply_linear(bind, prefix + ".attn.k", h);
  Var v = apply_linear(bind, prefix + ".attn.v", h);
  Var a = attention(tape, q, k, v, num_heads, causal, capture);
  x = add(tape, x, apply_linear(bind, prefix + ".attn.out", a));
  h = apply_norm(bind, prefix + ".ln2", x);
  h = gelu(tape, apply_linear(bind, prefix + ".mlp.fc1", h));
  return add(tape, x, apply_linear(bind, prefix + ".mlp.fc2", h));
}

// ---------------------------------------------------------------------------
// Vision encoder

template <typename T>
VisionEncoder<T>::VisionEncoder(VisionEncoderSpec spec) : spec_(spec) {
  spec_.validate();
}

template <typename T>
std::string VisionEncoder<T>::layer_prefix(std::size_t layer) {
  return "encoder.layer" + std::to_string(layer);
}

template <typename T>
void VisionEncoder<T>::register_params(ParameterStore<T>& store, Rng& rng) const {
  register_linear(store, "encoder.patch_embed", spec_.patch_dim, spec_.model_dim, rng);
  store.add("encoder.pos_embed", normal_matrix<T>(spec_.num_patches(), spec_.model_dim, 0.5, rng));
  for (std::size_t i = 1; i <= spec_.num_layers; ++i) {
    register_block(store, layer_prefix(i), spec_.model_dim, rng);
  }
  register_norm(store, "encoder.final_ln", spec_.model_dim);
}

template <typename T>
TokenSequence VisionEncoder<T>::patchify_embed(ParamBinder<T>& bind, const Tensor<float>& image) const {
  if (image.rank() != 3 || image.dim(0) != spec_.patch_rows || image.dim(1) != spec_.patch_cols ||
      image.dim(2) != spec_.patch_dim) {
    throw DimensionError("image shape " + shape_to_string(image.shape()) + " does not match patch grid " +
                         shape_to_string({spec_.patch_rows, spec_.patch_cols, spec_.patch_dim}));
  }
  Tape<T>& tape = bind.tape();
  Tensor<T> patches = Tensor<float>({spec_.num_patches(), spec_.patch_dim},
                                    std::vector<float>(image.values().begin(), image.values().end()))
                          .template cast<T>();
  Var x = apply_linear(bind, "encoder.patch_embed", tape.constant(std::move(patches)));
  x = add(tape, x, bind("encoder.pos_embed"));
  return TokenSequence{x, std::vector<Region>(spec_.num_patches(), Region::ImageTokens), false};
}

template <typename T>
TokenSequence VisionEncoder<T>::layer_forward(ParamBinder<T>& bind, std::size_t layer,
                                              const TokenSequence& input,
                                              AttentionCapture<T>* capture) const {
  if (layer < 1 || layer > spec_.num_layers) {
    throw DimensionError("encoder layer " + std::to_string(layer) + " outside 1.." +
                         std::to_string(spec_.num_layers));
  }
  const Tensor<T>& x = bind.tape().value(input.embeddings);
  if (x.cols() != spec_.model_dim || x.rows() != input.length()) {
    throw DimensionError("encoder layer input " + shape_to_string(x.shape()) + " expected width " +
                         std::to_string(spec_.model_dim));
  }
  Var out = block_forward(bind, layer_prefix(layer), input.embeddings, spec_.num_heads, false, capture);
  return TokenSequence{out, input.tags, false};
}

template <typename T>
TokenSequence VisionEncoder<T>::output_norm(ParamBinder<T>& bind, const TokenSequence& input) const {
  return TokenSequence{apply_norm(bind, "encoder.final_ln", input.embeddings), input.tags, false};
}

// ---------------------------------------------------------------------------
// Language model

template <typename T>
LanguageModel<T>::LanguageModel(LanguageModelSpec spec) : spec_(spec) {
  spec_.validate();
}

template <typename T>
std::string LanguageModel<T>::layer_prefix(std::size_t layer) {
  return "llm.layer" + std::to_string(layer);
}

template <typename T>
void LanguageModel<T>::register_params(ParameterStore<T>& store, Rng& rng) const {
  store.add("llm.token_embed", normal_matrix<T>(spec_.vocab_size, spec_.model_dim, 1.0, rng));
  store.add("llm.pos_embed", normal_matrix<T>(spec_.max_seq_len, spec_.model_dim, 0.5, rng));
  for (std::size_t j = 1; j <= spec_.num_layers; ++j) {
    register_block(store, layer_prefix(j), spec_.model_dim, rng);
  }
  register_norm(store, "llm.final_ln", spec_.model_dim);
}

template <typename T>
Var LanguageModel<T>::embed_tokens(ParamBinder<T>& bind, std::span<const int> ids) const {
  return embedding(bind.tape(), bind("llm.token_embed"), ids);
}

template <typename T>
Var LanguageModel<T>::add_positions(ParamBinder<T>& bind, Var embeddings) const {
  Tape<T>& tape = bind.tape();
  const std::size_t n = tape.value(embeddings).rows();
  if (n > spec_.max_seq_len) {
    throw CapacityError("sequence of " + std::to_string(n) + " tokens exceeds max_seq_len " +
                        std::to_string(spec_.max_seq_len));
  }
  return add(tape, embeddings, slice_rows(tape, bind("llm.pos_embed"), 0, n));
}

template <typename T>
TokenSequence LanguageModel<T>::layer_forward(ParamBinder<T>& bind, std::size_t layer,
                                              const TokenSequence& input,
                                              AttentionCapture<T>* capture) const {
  if (layer < 1 || layer > spec_.num_layers) {
    throw DimensionError("llm layer " + std::to_string(layer) + " outside 1.." +
                         std::to_string(spec_.num_layers));
  }
  if (input.length() > spec_.max_seq_len) {
    throw CapacityError("sequence of " + std::to_string(input.length()) +
                        " tokens exceeds max_seq_len " + std::to_string(spec_.max_seq_len));
  }
  const Tensor<T>& x = bind.tape().value(input.embeddings);
  if (x.cols() != spec_.model_dim || x.rows() != input.length()) {
    throw DimensionError("llm layer input " + shape_to_string(x.shape()) + " expected width " +
                         std::to_string(spec_.model_dim));
  }
  Var out = block_forward(bind, layer_prefix(layer), input.embeddings, spec_.num_heads, true, capture);
  return TokenSequence{out, input.tags, true};
}

template <typename T>
Var LanguageModel<T>::output_norm(ParamBinder<T>& bind, Var hidden) const {
  return apply_norm(bind, "llm.final_ln", hidden);
}

// ---------------------------------------------------------------------------
// Head

template <typename T>
void LMHead<T>::register_params(ParameterStore<T>& store, Rng& rng) const {
  store.add(kWeight, normal_matrix<T>(model_dim_, vocab_, 1.0 / std::sqrt(double(model_dim_)), rng));
  store.add(kBias, Tensor<T>({vocab_}));
}

template <typename T>
Var LMHead<T>::logits(ParamBinder<T>& bind, Var hidden) const {
  const Tensor<T>& h = bind.tape().value(hidden);
  if (h.cols() != model_dim_) {
    throw DimensionError("head input " + shape_to_string(h.shape()) + " expected width " +
                         std::to_string(model_dim_));
  }
  return linear(bind.tape(), hidden, bind(kWeight), bind(kBias));
}

template <typename T>
std::vector<int> greedy_tokens(const Tensor<T>& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

#define M2PT_INSTANTIATE_MODEL(T)                                                          \
  template void register_block<T>(ParameterStore<T>&, const std::string&, std::size_t, Rng&); \
  template Var block_forward<T>(ParamBinder<T>&, const std::string&, Var, std::size_t, bool, \
                                AttentionCapture<T>*);                                      \
  template class VisionEncoder<T>;                                                         \
  template class LanguageModel<T>;                                                         \
  template class LMHead<T>;                                                                \
  template std::vector<int> greedy_tokens<T>(const Tensor<T>&);

M2PT_INSTANTIATE_MODEL(float)
M2PT_INSTANTIATE_MODEL(double)

}  // namespace m2pt
