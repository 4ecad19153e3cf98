#include "headscope/head_attribution.hpp"

#include <cmath>

#include "headscope/errors.hpp"
#include "headscope/gemm.hpp"

namespace headscope {

AttributionMatrix make_attribution_matrix(NeuronHandle neuron, std::string prompt_id, std::size_t position,
                                          int n_layers, int n_heads, std::vector<double> raw_scores,
                                          double sigma_multiplier) {
  const std::size_t total = static_cast<std::size_t>(n_layers) * static_cast<std::size_t>(n_heads);
  if (raw_scores.size() != total) throw Error(ErrorCode::InvalidArgument, "score count does not match the head grid");
  if (neuron.layer < 0 || neuron.layer >= n_layers) throw Error(ErrorCode::InvalidArgument, "neuron layer out of range");

  AttributionMatrix m;
  m.neuron = neuron;
  m.prompt_id = std::move(prompt_id);
  m.position = position;
  m.n_layers = n_layers;
  m.n_heads = n_heads;
  m.sigma_multiplier = sigma_multiplier;
  m.scores = std::move(raw_scores);
  m.eligible.assign(total, 0);
  m.active.assign(total, 0);

  std::size_t count = 0;
  double sum = 0.0;
  for (int l = 0; l < n_layers; ++l) {
    for (int h = 0; h < n_heads; ++h) {
      const std::size_t i = m.index({l, h});
      if (l <= neuron.layer) {
        m.eligible[i] = 1;
        sum += m.scores[i];
        ++count;
      } else {
        m.scores[i] = 0.0;
      }
    }
  }
  m.mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    if (m.eligible[i]) sq += (m.scores[i] - m.mean) * (m.scores[i] - m.mean);
  }
  m.stddev = std::sqrt(sq / static_cast<double>(count));
  const double cut = m.mean + sigma_multiplier * m.stddev;
  for (std::size_t i = 0; i < total; ++i) m.active[i] = m.eligible[i] && m.scores[i] > cut;
  return m;
}

AttributionMatrix attribute_heads(const ForwardTrace& trace, NeuronHandle neuron, std::size_t position,
                                  const ModelBundle& model, std::string prompt_id, double sigma_multiplier) {
  if (!model.contains(neuron)) throw Error(ErrorCode::InvalidArgument, "neuron out of range");
  if (position >= trace.length()) {
    throw Error(ErrorCode::PositionOutOfRange,
                "position " + std::to_string(position) + " of a " + std::to_string(trace.length()) + "-token trace");
  }
  if (trace.head_contribution.size() <= static_cast<std::size_t>(neuron.layer)) {
    throw Error(ErrorCode::HeadsNotCaptured, "trace lacks head contributions up to layer " + std::to_string(neuron.layer));
  }
  const auto e = model.neuron_input_weights(neuron);
  const int n_layers = model.config.n_layers;
  const int n_heads = model.config.n_heads;
  std::vector<double> scores(static_cast<std::size_t>(n_layers) * static_cast<std::size_t>(n_heads), 0.0);
  for (int l = 0; l <= neuron.layer; ++l) {
    for (int h = 0; h < n_heads; ++h) {
      scores[static_cast<std::size_t>(l * n_heads + h)] = kernels::dot_f64(trace.head({l, h}, position), e);
    }
  }
  return make_attribution_matrix(neuron, std::move(prompt_id), position, n_layers, n_heads, std::move(scores),
                                 sigma_multiplier);
}

std::vector<HeadId> active_heads(const AttributionMatrix& matrix) {
  std::vector<HeadId> out;
  for (int l = 0; l < matrix.n_layers; ++l) {
    for (int h = 0; h < matrix.n_heads; ++h) {
      if (matrix.is_active({l, h})) out.push_back({l, h});
    }
  }
  return out;
}

std::vector<HeadActivitySummary> activity_summary(std::span<const AttributionMatrix> matrices) {
  if (matrices.empty()) throw Error(ErrorCode::EmptyInput, "no attribution matrices");
  const auto& first = matrices.front();
  for (const auto& m : matrices) {
    if (m.neuron != first.neuron || m.n_layers != first.n_layers || m.n_heads != first.n_heads) {
      throw Error(ErrorCode::InvalidArgument, "attribution matrices describe different neurons or models");
    }
  }
  std::vector<HeadActivitySummary> out;
  for (int l = 0; l < first.n_layers; ++l) {
    for (int h = 0; h < first.n_heads; ++h) {
      HeadActivitySummary s;
      s.neuron = first.neuron;
      s.head = {l, h};
      std::size_t active = 0;
      for (const auto& m : matrices) {
        const bool a = m.is_active({l, h});
        if (!s.per_prompt_active.emplace(m.prompt_id, a).second) {
          throw Error(ErrorCode::InvalidArgument, "duplicate prompt id '" + m.prompt_id + "'");
        }
        active += a ? 1 : 0;
      }
      if (active == 0) continue;
      s.active_fraction = static_cast<double>(active) / static_cast<double>(matrices.size());
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<HeadActivitySummary> select_explainable(std::span<const HeadActivitySummary> summaries, double low,
                                                    double high) {
  if (!(0.0 <= low && low < high && high <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "activity band must satisfy 0 <= low < high <= 1");
  }
  std::vector<HeadActivitySummary> out;
  for (const auto& s : summaries) {
    if (s.active_fraction >= low && s.active_fraction <= high) out.push_back(s);
  }
  return out;
}

}  // namespace headscope
