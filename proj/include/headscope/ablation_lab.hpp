#pragma once

#include <span>
#include <string>
#include <vector>

#include "headscope/analytics.hpp"
#include "headscope/model_io.hpp"
#include "headscope/prompt_miner.hpp"

namespace headscope {

enum class AblationMode { Zero, Mean };

struct AblationRecord {
  NeuronHandle neuron;
  HeadId head;
  std::string prompt_id;
  bool head_was_active = false;
  double prob_original = 0.0;
  double prob_ablated = 0.0;
  double delta = 0.0;  // prob_original - prob_ablated
  float neuron_act_original = 0.0f;
  float neuron_act_ablated = 0.0f;
};

struct AblationReport {
  std::vector<AblationRecord> records;
  double ks_statistic = 0.0;
  double ks_p_value = 1.0;
  double mean_delta_active = 0.0;
  double mean_delta_inactive = 0.0;
  std::size_t n_active = 0;
  std::size_t n_inactive = 0;
};

struct AblationOptions {
  AblationMode mode = AblationMode::Zero;
  /// Replacement vector for Mean mode (see mean_head_output).
  Vector mean_output;
};

/// Runs the prompt's truncated tokens with and without the head, measuring
/// the probability of `token` at the final position and the neuron's
/// activation at the truncated peak position.
AblationRecord ablate_and_measure(const ModelBundle& model, NeuronHandle neuron, TokenId token, HeadId head,
                                  const PromptRecord& prompt, bool head_was_active,
                                  const AblationOptions& options = {});

/// Groups deltas by head activity and compares them with a two-sample KS
/// test. Throws DegenerateGroup when either group is empty.
AblationReport ablation_report(std::vector<AblationRecord> records);

/// Mean of the head's contribution over every position of every prompt.
Vector mean_head_output(const ModelBundle& model, HeadId head, std::span<const std::vector<TokenId>> prompts);

}  // namespace headscope
