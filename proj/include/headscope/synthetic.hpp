#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "headscope/corpus.hpp"
#include "headscope/model_io.hpp"
#include "headscope/tokenizer.hpp"

namespace headscope {

/// Gaussian weights with the given scale; LN gains near 1 and small biases.
ModelBundle random_model(const ModelConfig& config, std::uint64_t seed, float weight_scale = 0.2f);

/// Byte-level tables plus one token for " <word>" (and every prefix of it)
/// for each word. Merges only ever extend a space-led prefix, so each
/// " <word>" encodes to its single token.
TokenizerTables word_tokenizer_tables(std::span<const std::string> words);

/// A 2-layer model in which head (0, 0) alone writes the input direction of
/// one MLP neuron in layer 1 whenever the trigger word occurred earlier in
/// the prompt, and that neuron's output weights point at the target token.
struct PlantedCircuit {
  ModelBundle model;
  TokenizerTables tables;
  NeuronHandle neuron;
  HeadId head;
  std::string trigger_word;
  std::string target_word;
  TokenId trigger = 0;
  TokenId target = 0;
  /// Documents containing " can come and" at a random interior position.
  std::vector<CorpusDocument> trigger_docs;
  /// Documents without the trigger word.
  std::vector<CorpusDocument> control_docs;

  /// Trigger and control documents interleaved in a fixed order.
  std::vector<CorpusDocument> corpus() const;
};

struct PlantedOptions {
  std::uint64_t seed = 1;
  std::size_t n_trigger_docs = 20;
  std::size_t n_control_docs = 80;
};

PlantedCircuit make_planted_circuit(const PlantedOptions& options = {});

}  // namespace headscope
