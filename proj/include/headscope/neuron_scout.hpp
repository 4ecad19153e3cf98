#pragma once

#include <span>
#include <string>
#include <vector>

#include "headscope/model_io.hpp"
#include "headscope/tokenizer.hpp"

namespace headscope {

/// Dot is the plain inner product; Cosine divides by both vector norms.
enum class ScoreKind { Dot, Cosine };

struct ScoredToken {
  TokenId token = 0;
  double score = 0.0;
};

struct CongruenceResult {
  double score = 0.0;
  TokenId token = 0;
  /// Next-best tokens after the argmax, best first.
  std::vector<ScoredToken> runners_up;
};

struct NextTokenNeuron {
  NeuronHandle handle;
  double score = 0.0;
  TokenId token = 0;
  std::string token_text;
  std::vector<ScoredToken> runners_up;
};

struct LayerHistogram {
  std::vector<std::size_t> counts;  // one entry per layer
  std::size_t total() const;
};

struct ScoutOptions {
  ScoreKind kind = ScoreKind::Dot;
  std::size_t runners_up = 5;
};

/// Max over candidates of <w_out, e^t>, accumulated in f64 in index order.
/// Ties go to the smallest token id.
CongruenceResult congruence_score(const ModelBundle& model, NeuronHandle handle,
                                  std::span<const TokenId> candidate_tokens,
                                  const ScoutOptions& options = {});

/// Top-k neurons of each requested layer, sorted by score descending, then
/// (layer, neuron) ascending. token_text is filled when a tokenizer is given.
std::vector<NextTokenNeuron> scout_neurons(const ModelBundle& model, std::span<const int> layers,
                                           std::size_t top_k, std::span<const TokenId> candidate_tokens,
                                           const Tokenizer* tokenizer = nullptr,
                                           const ScoutOptions& options = {});

/// For each candidate token, counts the layer of its best-scoring neuron
/// across the whole model (ties go to the lowest (layer, neuron)).
LayerHistogram layer_histogram(const ModelBundle& model, std::span<const TokenId> candidate_tokens,
                               ScoreKind kind = ScoreKind::Dot);

/// Every id whose decoded text is a whole word, ascending.
std::vector<TokenId> word_token_candidates(const Tokenizer& tokenizer);
std::vector<TokenId> all_token_candidates(std::size_t vocab_size);

/// The last `count` layer indices of an n_layers model, ascending.
std::vector<int> trailing_layers(int n_layers, int count);

}  // namespace headscope
