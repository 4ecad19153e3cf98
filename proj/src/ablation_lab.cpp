#include "headscope/ablation_lab.hpp"

#include "headscope/errors.hpp"
#include "headscope/transformer.hpp"

namespace headscope {

AblationRecord ablate_and_measure(const ModelBundle& model, NeuronHandle neuron, TokenId token, HeadId head,
                                  const PromptRecord& prompt, bool head_was_active, const AblationOptions& options) {
  if (!model.contains(head)) throw Error(ErrorCode::InvalidArgument, "head out of range");
  const auto& ids = prompt.truncated ? prompt.truncated_ids : prompt.token_ids;
  const std::size_t peak = prompt.truncated ? prompt.truncated_peak_position : prompt.peak_position;
  if (peak >= ids.size()) throw Error(ErrorCode::PositionOutOfRange, "peak position outside the prompt");

  ForwardOptions base;
  base.capture_neurons = {neuron};
  base.capture_logits = LogitCapture::Last;
  ForwardOptions ablated = base;
  ablated.ablate_heads = {head};
  if (options.mode == AblationMode::Mean) {
    if (options.mean_output.size() != static_cast<std::size_t>(model.config.d_model)) {
      throw Error(ErrorCode::InvalidArgument, "mean ablation needs a d_model-sized mean output");
    }
    ablated.head_replacements[head] = options.mean_output;
  }

  const auto original = forward(model, ids, base);
  const auto without = forward(model, ids, ablated);

  AblationRecord r;
  r.neuron = neuron;
  r.head = head;
  r.prompt_id = prompt.doc_id;
  r.head_was_active = head_was_active;
  r.prob_original = next_token_probability(original, token);
  r.prob_ablated = next_token_probability(without, token);
  r.delta = r.prob_original - r.prob_ablated;
  r.neuron_act_original = original.neuron(neuron, peak);
  r.neuron_act_ablated = without.neuron(neuron, peak);
  return r;
}

AblationReport ablation_report(std::vector<AblationRecord> records) {
  std::vector<double> active;
  std::vector<double> inactive;
  for (const auto& r : records) (r.head_was_active ? active : inactive).push_back(r.delta);
  if (active.empty() || inactive.empty()) {
    throw Error(ErrorCode::DegenerateGroup, std::to_string(active.size()) + " active and " +
                                                std::to_string(inactive.size()) + " inactive records");
  }
  AblationReport report;
  const auto ks = ks_two_sample(active, inactive);
  report.ks_statistic = ks.d;
  report.ks_p_value = ks.p;
  report.mean_delta_active = mean(active);
  report.mean_delta_inactive = mean(inactive);
  report.n_active = active.size();
  report.n_inactive = inactive.size();
  report.records = std::move(records);
  return report;
}

Vector mean_head_output(const ModelBundle& model, HeadId head, std::span<const std::vector<TokenId>> prompts) {
  if (!model.contains(head)) throw Error(ErrorCode::InvalidArgument, "head out of range");
  if (prompts.empty()) throw Error(ErrorCode::EmptyInput, "no prompts for mean ablation");
  const std::size_t d = static_cast<std::size_t>(model.config.d_model);
  std::vector<double> sum(d, 0.0);
  std::size_t count = 0;
  ForwardOptions opt;
  opt.capture_heads = true;
  opt.capture_logits = LogitCapture::None;
  opt.max_layer = head.layer;
  for (const auto& ids : prompts) {
    const auto trace = forward(model, ids, opt);
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const auto row = trace.head(head, p);
      for (std::size_t c = 0; c < d; ++c) sum[c] += row[c];
      ++count;
    }
  }
  Vector out(d);
  for (std::size_t c = 0; c < d; ++c) out[c] = static_cast<float>(sum[c] / static_cast<double>(count));
  return out;
}

}  // namespace headscope
