#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "headscope/key_value.hpp"
#include "headscope/matrix.hpp"

namespace headscope {

using TokenId = std::int32_t;

/// (layer, neuron) index of an MLP hidden unit.
struct NeuronHandle {
  int layer = 0;
  int neuron = 0;
  auto operator<=>(const NeuronHandle&) const = default;
};

/// (layer, head) index of an attention head.
struct HeadId {
  int layer = 0;
  int head = 0;
  auto operator<=>(const HeadId&) const = default;
};

struct ModelConfig {
  int n_layers = 0;
  int n_heads = 0;
  int d_model = 0;
  int d_head = 0;
  int d_mlp = 0;
  int vocab_size = 0;
  int max_positions = 0;
  float layer_norm_eps = 1e-5f;

  /// Throws InvalidConfig for non-positive counts and ShapeMismatch when
  /// n_heads * d_head != d_model.
  void validate() const;
  /// Reads the architecture keys; d_head and d_mlp default to
  /// d_model / n_heads and 4 * d_model.
  static ModelConfig from_key_values(const KeyValueFile& kv);
};

/// Templates mapping logical weights to checkpoint tensor names; `{layer}`
/// is replaced by the block index. Defaults follow the GPT-2 Hub export.
struct TensorNameMap {
  std::string prefix;
  std::map<std::string, std::string> names;

  static TensorNameMap gpt2_defaults();
  static TensorNameMap from_key_values(const KeyValueFile& kv);
  std::string resolve(const std::string& logical, int layer = -1) const;
  bool has(const std::string& logical) const { return names.contains(logical); }
};

struct LayerWeights {
  Vector ln1_gain, ln1_bias;
  Matrix w_q, w_k, w_v;  // [d_model x d_model]; head h owns columns [h*d_head, (h+1)*d_head)
  Vector b_q, b_k, b_v;
  Matrix w_o;            // [d_model x d_model]; head h owns rows [h*d_head, (h+1)*d_head)
  Vector b_o;
  Vector ln2_gain, ln2_bias;
  Matrix w_in;           // [d_model x d_mlp]; column j is neuron j's input weight
  Vector b_in;
  Matrix w_out;          // [d_mlp x d_model]; row j is neuron j's output weight
  Vector b_out;
};

/// Immutable weights of one GPT-2-family checkpoint. The unembedding is the
/// token embedding itself (weight tying).
struct ModelBundle {
  ModelConfig config;
  Matrix token_embedding;     // [vocab_size x d_model]
  Matrix position_embedding;  // [max_positions x d_model]
  std::vector<LayerWeights> layers;
  Vector final_ln_gain, final_ln_bias;

  std::span<const float> unembedding_row(TokenId token) const {
    return token_embedding.row(static_cast<std::size_t>(token));
  }
  std::span<const float> neuron_output_weights(NeuronHandle n) const {
    return layers.at(static_cast<std::size_t>(n.layer)).w_out.row(static_cast<std::size_t>(n.neuron));
  }
  /// Column j of W_1, copied out (W_1 is stored row-major).
  std::vector<float> neuron_input_weights(NeuronHandle n) const;

  bool contains(NeuronHandle n) const {
    return n.layer >= 0 && n.layer < config.n_layers && n.neuron >= 0 && n.neuron < config.d_mlp;
  }
  bool contains(HeadId h) const {
    return h.layer >= 0 && h.layer < config.n_layers && h.head >= 0 && h.head < config.n_heads;
  }

  /// Checks every tensor shape against config and that all values are finite.
  void validate() const;
};

/// Loads and validates a checkpoint. The config file holds the ModelConfig
/// keys plus optional `tensor_prefix` and `tensor.<logical> = <name>` entries.
ModelBundle load_model(const std::filesystem::path& weights_path,
                       const std::filesystem::path& config_path);

/// Builds a bundle from an already-open config and weights file.
ModelBundle load_model(const std::filesystem::path& weights_path, const KeyValueFile& config);

/// Writes `model` as f32 safetensors with GPT-2 Hub tensor names (fused
/// c_attn) plus a matching config file.
void save_model(const ModelBundle& model, const std::filesystem::path& weights_path,
                const std::filesystem::path& config_path);

std::string format_model_config(const ModelConfig& config);

}  // namespace headscope
