#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "m2pt/params.hpp"
#include "m2pt/rng.hpp"

namespace m2pt {

/// Input-region categories, in LLM layout order.
enum class Region : std::uint8_t {
  TextualPrompt,
  SystemText,
  VisualPrompt,
  ImageTokens,
  Instruction,
  Target,
};

inline constexpr std::array<Region, 6> kRegionOrder = {
    Region::TextualPrompt, Region::SystemText, Region::VisualPrompt,
    Region::ImageTokens,   Region::Instruction, Region::Target};

const char* region_name(Region region);

inline bool is_prompt(Region r) {
  return r == Region::TextualPrompt || r == Region::VisualPrompt;
}

struct VisionEncoderSpec {
  std::size_t num_layers = 4;
  std::size_t model_dim = 64;
  std::size_t num_heads = 4;
  std::size_t patch_rows = 4;
  std::size_t patch_cols = 4;
  std::size_t patch_dim = 48;

  std::size_t num_patches() const { return patch_rows * patch_cols; }
  void validate() const;
};

struct LanguageModelSpec {
  std::size_t num_layers = 4;
  std::size_t model_dim = 128;
  std::size_t num_heads = 4;
  std::size_t vocab_size = 64;
  std::size_t max_seq_len = 256;

  void validate() const;
};

struct ModelSpec {
  VisionEncoderSpec vision;
  LanguageModelSpec language;
};

/// Embeddings plus one region tag per position.
struct TokenSequence {
  Var embeddings;
  std::vector<Region> tags;
  bool causal = false;

  std::size_t length() const { return tags.size(); }
  std::size_t count(Region r) const;
};

/// Pre-norm transformer block: x + Attn(LN(x)), then + MLP(LN(x)) with a
/// GELU MLP of expansion 4.
template <typename T>
void register_block(ParameterStore<T>& store, const std::string& prefix, std::size_t dim, Rng& rng);

template <typename T>
Var block_forward(ParamBinder<T>& bind, const std::string& prefix, Var x, std::size_t num_heads,
                  bool causal, AttentionCapture<T>* capture);

template <typename T>
class VisionEncoder {
 public:
  explicit VisionEncoder(VisionEncoderSpec spec);

  const VisionEncoderSpec& spec() const { return spec_; }

  void register_params(ParameterStore<T>& store, Rng& rng) const;

  /// Linear patch embedding plus learned positions; image is rows×cols×patch_dim.
  TokenSequence patchify_embed(ParamBinder<T>& bind, const Tensor<float>& image) const;

  /// Bidirectional block `layer` (1-based). Length is preserved.
  TokenSequence layer_forward(ParamBinder<T>& bind, std::size_t layer, const TokenSequence& input,
                              AttentionCapture<T>* capture = nullptr) const;

  TokenSequence output_norm(ParamBinder<T>& bind, const TokenSequence& input) const;

  static std::string layer_prefix(std::size_t layer);

 private:
  VisionEncoderSpec spec_;
};

template <typename T>
class LanguageModel {
 public:
  explicit LanguageModel(LanguageModelSpec spec);

  const LanguageModelSpec& spec() const { return spec_; }

  void register_params(ParameterStore<T>& store, Rng& rng) const;

  Var embed_tokens(ParamBinder<T>& bind, std::span<const int> ids) const;

  /// Adds positions 0..n-1 to a carried (prompt-free) embedding block.
  Var add_positions(ParamBinder<T>& bind, Var embeddings) const;

  /// Causal block `layer` (1-based). Throws CapacityError past max_seq_len.
  TokenSequence layer_forward(ParamBinder<T>& bind, std::size_t layer, const TokenSequence& input,
                              AttentionCapture<T>* capture = nullptr) const;

  Var output_norm(ParamBinder<T>& bind, Var hidden) const;

  static std::string layer_prefix(std::size_t layer);

 private:
  LanguageModelSpec spec_;
};

/// f_head: d_t → V projection.
template <typename T>
class LMHead {
 public:
  LMHead(std::size_t model_dim, std::size_t vocab_size) : model_dim_(model_dim), vocab_(vocab_size) {}

  void register_params(ParameterStore<T>& store, Rng& rng) const;

  Var logits(ParamBinder<T>& bind, Var hidden) const;

  static constexpr const char* kWeight = "head.weight";
  static constexpr const char* kBias = "head.bias";

 private:
  std::size_t model_dim_;
  std::size_t vocab_;
};

/// Index of the maximum logit in each row (first on ties).
template <typename T>
std::vector<int> greedy_tokens(const Tensor<T>& logits);

}  // namespace m2pt
