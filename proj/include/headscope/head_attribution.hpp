#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "headscope/model_io.hpp"
#include "headscope/transformer.hpp"

namespace headscope {

/// Head attribution scores of every head for one (prompt, neuron) pair.
/// Heads are indexed layer-major: index = layer * n_heads + head.
struct AttributionMatrix {
  NeuronHandle neuron;
  std::string prompt_id;
  std::size_t position = 0;
  int n_layers = 0;
  int n_heads = 0;
  std::vector<double> scores;
  std::vector<char> eligible;
  std::vector<char> active;
  double mean = 0.0;
  double stddev = 0.0;
  double sigma_multiplier = 2.0;

  std::size_t index(HeadId h) const {
    return static_cast<std::size_t>(h.layer) * static_cast<std::size_t>(n_heads) + static_cast<std::size_t>(h.head);
  }
  double score(HeadId h) const { return scores.at(index(h)); }
  bool is_eligible(HeadId h) const { return eligible.at(index(h)) != 0; }
  bool is_active(HeadId h) const { return active.at(index(h)) != 0; }
};

/// Builds a matrix from raw scores: entries of heads in layers above the
/// neuron's are forced to 0, mean and population stddev are taken over the
/// eligible heads, and a head is active when its score exceeds
/// mean + sigma_multiplier * stddev.
AttributionMatrix make_attribution_matrix(NeuronHandle neuron, std::string prompt_id, std::size_t position,
                                          int n_layers, int n_heads, std::vector<double> raw_scores,
                                          double sigma_multiplier = 2.0);

/// score(k, h) = <head_contribution[k][h][position], W_in[:, j] of layer l>
/// for k <= l, accumulated in f64.
AttributionMatrix attribute_heads(const ForwardTrace& trace, NeuronHandle neuron, std::size_t position,
                                  const ModelBundle& model, std::string prompt_id = {},
                                  double sigma_multiplier = 2.0);

std::vector<HeadId> active_heads(const AttributionMatrix& matrix);

struct HeadActivitySummary {
  NeuronHandle neuron;
  HeadId head;
  double active_fraction = 0.0;
  std::map<std::string, bool> per_prompt_active;
};

/// One summary per head active in at least one prompt, ordered by head.
std::vector<HeadActivitySummary> activity_summary(std::span<const AttributionMatrix> matrices);

/// Summaries with low <= active_fraction <= high.
std::vector<HeadActivitySummary> select_explainable(std::span<const HeadActivitySummary> summaries,
                                                    double low = 0.25, double high = 0.75);

}  // namespace headscope
