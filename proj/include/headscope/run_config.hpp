#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "headscope/ablation_lab.hpp"
#include "headscope/explainer.hpp"
#include "headscope/key_value.hpp"
#include "headscope/neuron_scout.hpp"

namespace headscope {

/// One resolved setting. provenance is "method-default" (a value the method
/// itself prescribes), "plumbing-default" (a value chosen for this tool),
/// "config-file" or "override" (command line).
struct ConfigEntry {
  std::string value;
  std::string provenance;
};

struct RunConfig {
  std::filesystem::path base_dir;
  std::filesystem::path model_weights;
  std::filesystem::path model_config;
  std::filesystem::path tokenizer_vocab;
  std::filesystem::path tokenizer_merges;
  std::filesystem::path corpus;

  /// Explicit layers to scout; empty means the trailing layers.
  std::vector<int> layers;
  /// Trailing layer count; 0 picks it from the model depth.
  int trailing_layers = 0;
  std::size_t top_k_neurons = 40;
  /// Keep only the best max_neurons scouted neurons overall; 0 keeps all.
  std::size_t max_neurons = 0;
  bool word_candidates = true;
  ScoreKind score_kind = ScoreKind::Dot;
  bool layer_histogram = false;

  std::size_t n_mine_prompts = 20;
  std::size_t n_test_prompts = 10;
  std::size_t window_tokens = 128;
  std::size_t min_tokens = 5;
  std::size_t max_prompt_tokens = 100;
  double retain_fraction = 0.8;

  double band_low = 0.25;
  double band_high = 0.75;
  double sigma_multiplier = 2.0;

  std::size_t max_examples = 20;
  ScoreVariant score_variant = ScoreVariant::Printed;
  /// Extra mine-prompt counts to score side by side with n_mine_prompts.
  std::vector<std::size_t> prompt_sweep;

  /// "http" or "stub".
  std::string backend = "http";
  std::string endpoint;
  LlmSettings llm;
  int backend_max_attempts = 5;
  std::size_t backend_concurrency = 4;
  /// echo, anti, coin or rules.
  std::string stub_mode = "echo";
  std::filesystem::path stub_rules;
  std::string stub_explanation;

  /// "scout" or "random" (baseline neurons outside the scouted set).
  std::string neuron_source = "scout";
  std::size_t random_per_layer = 20;

  AblationMode ablation_mode = AblationMode::Zero;
  std::uint64_t seed = 0;
  bool dump_traces = false;

  /// Every key with its resolved value and provenance.
  std::map<std::string, ConfigEntry> entries;

  /// Unknown keys and invalid values are InvalidConfig. Relative paths are
  /// resolved against base_dir.
  static RunConfig from_key_values(const KeyValueFile& kv, const std::filesystem::path& base_dir,
                                   const std::map<std::string, std::string>& overrides = {});
  static RunConfig load(const std::filesystem::path& path, const std::map<std::string, std::string>& overrides = {});

  const std::string& value(const std::string& key) const;
  nlohmann::json snapshot() const;
  /// Resolved values of the given keys, as a stable string.
  std::string fingerprint_of(const std::vector<std::string>& keys) const;

  std::vector<int> resolve_layers(int n_layers) const;
  /// n_mine_prompts plus the sweep, ascending and unique.
  std::vector<std::size_t> prompt_counts() const;
  std::size_t max_mine_prompts() const;
};

/// Trailing layer count for a model depth: 5 for 36+ layers, 4 for 24+, else 3.
int default_trailing_layers(int n_layers);

/// Every key RunConfig understands, in file order.
const std::vector<std::string>& run_config_keys();

}  // namespace headscope
