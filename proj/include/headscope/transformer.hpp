#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "headscope/matrix.hpp"
#include "headscope/model_io.hpp"

namespace headscope {

enum class LogitCapture { None, Last, All };

struct ForwardOptions {
  bool capture_heads = false;
  /// Restrict head capture to one position (the trace then holds one row per head).
  std::optional<std::size_t> head_position;
  std::vector<NeuronHandle> capture_neurons;
  bool capture_all_neurons = false;
  std::vector<HeadId> ablate_heads;
  /// Replacement vectors for ablated heads (mean ablation). Heads absent
  /// from the map contribute zero.
  std::map<HeadId, Vector> head_replacements;
  LogitCapture capture_logits = LogitCapture::Last;
  bool capture_residuals = false;
  /// Stop once this layer's MLP activations are known. Requires
  /// capture_logits == None. Negative means run every layer.
  int max_layer = -1;
};

struct ForwardTrace {
  std::vector<TokenId> token_ids;
  int n_layers = 0;
  int n_heads = 0;

  /// [layer][head] -> [positions x d_model], or [1 x d_model] when
  /// head_position was set. Ablated heads hold what they contributed
  /// (zero or their replacement).
  std::vector<std::vector<Matrix>> head_contribution;
  std::optional<std::size_t> head_position;

  /// Per layer [positions x d_mlp] when every neuron was captured.
  std::vector<Matrix> mlp_activation;
  std::map<NeuronHandle, Vector> neuron_activation;

  /// [positions x vocab] for All, [1 x vocab] for Last.
  Matrix logits;
  bool logits_all_positions = false;

  /// residual_stream[l] enters block l; residual_stream[n_layers] is the
  /// final pre-LN residual. post_attention[l] = residual_stream[l] +
  /// attention_output[l]; attention_output[l] includes the output bias.
  std::vector<Matrix> residual_stream;
  std::vector<Matrix> post_attention;
  std::vector<Matrix> attention_output;
  std::vector<Matrix> mlp_output;

  std::size_t length() const { return token_ids.size(); }
  bool has_heads() const { return !head_contribution.empty(); }
  std::span<const float> head(HeadId id, std::size_t position) const;
  float neuron(NeuronHandle n, std::size_t position) const;
  /// Activation of `n` at every position.
  std::vector<float> neuron_values(NeuronHandle n) const;
  std::span<const float> final_logits() const;
};

/// Pre-LN GPT-2 forward pass. Every captured value at position p depends
/// only on tokens [0, p] and the result is bit-identical across calls.
ForwardTrace forward(const ModelBundle& model, std::span<const TokenId> token_ids,
                     const ForwardOptions& options = {});

/// Softmax of the final-position logits, evaluated at `token`.
double next_token_probability(const ForwardTrace& trace, TokenId token);

/// Full softmax of the final-position logits.
std::vector<double> next_token_distribution(const ForwardTrace& trace);

float gelu_tanh(float x);

}  // namespace headscope
