#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "headscope/corpus.hpp"
#include "headscope/model_io.hpp"
#include "headscope/tokenizer.hpp"

namespace headscope {

struct ActivationPeak {
  float value = 0.0f;
  std::size_t position = 0;
};

struct PromptRecord {
  NeuronHandle neuron;
  std::string doc_id;
  std::string subset;
  Split split = Split::Mine;
  /// Decoded scan window (after line-break normalization).
  std::string original_text;
  std::vector<TokenId> token_ids;
  float peak_activation = 0.0f;
  std::size_t peak_position = 0;
  /// Shortest suffix of token_ids[0, peak_position] that keeps the threshold.
  std::string truncated_text;
  std::vector<TokenId> truncated_ids;
  float truncated_activation = 0.0f;
  std::size_t truncated_peak_position = 0;
  bool truncated = false;
  /// Set when the truncation is longer than the prompt-length cap.
  bool discarded = false;
};

struct MineOptions {
  std::size_t window_tokens = 128;
  std::size_t min_tokens = 5;
  /// Only documents in this split are scanned.
  Split split = Split::Mine;
};

struct TruncateOptions {
  double retain_fraction = 0.8;
  std::size_t max_prompt_tokens = 100;
};

/// Largest value and its earliest position.
ActivationPeak peak_of(std::span<const float> values);

/// Peak of the neuron's activation over positions of `token_ids`.
ActivationPeak activation_profile(const ModelBundle& model, NeuronHandle neuron, std::span<const TokenId> token_ids);

/// Document scanned once for several neurons; peaks[i] belongs to neurons[i].
struct ScannedDocument {
  std::size_t doc_index = 0;
  std::vector<TokenId> ids;
  std::vector<ActivationPeak> peaks;
};

/// Tokenizes each document of the requested split (line breaks normalized,
/// first window_tokens tokens), skips short ones, and records every
/// neuron's peak with one forward pass per document.
std::vector<ScannedDocument> scan_corpus(const ModelBundle& model, const Tokenizer& tokenizer,
                                         std::span<const NeuronHandle> neurons,
                                         std::span<const CorpusDocument> corpus, const MineOptions& options = {});

/// The n_prompts scanned documents with the highest peak for neurons[neuron_index],
/// descending, ties broken by doc_id. Throws CorpusExhausted if too few.
std::vector<PromptRecord> select_top_prompts(const Tokenizer& tokenizer, std::span<const ScannedDocument> scanned,
                                             std::span<const CorpusDocument> corpus,
                                             std::span<const NeuronHandle> neurons, std::size_t neuron_index,
                                             std::size_t n_prompts, Split split);

std::vector<PromptRecord> mine_top_prompts(const ModelBundle& model, const Tokenizer& tokenizer, NeuronHandle neuron,
                                           std::span<const CorpusDocument> corpus, std::size_t n_prompts,
                                           const MineOptions& options = {});

/// Scans suffixes of token_ids[0, peak_position] from shortest to longest
/// and keeps the first whose rerun peak reaches retain_fraction of the
/// original peak (or the peak itself when it is negative).
PromptRecord truncate_prompt(const ModelBundle& model, const Tokenizer& tokenizer, NeuronHandle neuron,
                             PromptRecord record, const TruncateOptions& options = {});

/// Threshold a truncation must reach for a given original peak.
double truncation_threshold(float peak_activation, double retain_fraction);

/// Number of distinct subset labels.
std::size_t diversity_count(std::span<const PromptRecord> records);

}  // namespace headscope
