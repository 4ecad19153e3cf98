#include "headscope/prompt_miner.hpp"

#include <algorithm>
#include <optional>
#include <set>

#include "headscope/errors.hpp"
#include "headscope/parallel.hpp"
#include "headscope/transformer.hpp"

namespace headscope {
namespace {

ForwardOptions neuron_only(std::span<const NeuronHandle> neurons) {
  ForwardOptions opt;
  opt.capture_neurons.assign(neurons.begin(), neurons.end());
  opt.capture_logits = LogitCapture::None;
  int max_layer = 0;
  for (const auto& n : neurons) max_layer = std::max(max_layer, n.layer);
  opt.max_layer = max_layer;
  return opt;
}

}  // namespace

ActivationPeak peak_of(std::span<const float> values) {
  if (values.empty()) throw Error(ErrorCode::EmptySequence, "no activations");
  ActivationPeak peak{values[0], 0};
  for (std::size_t p = 1; p < values.size(); ++p) {
    if (values[p] > peak.value) peak = {values[p], p};
  }
  return peak;
}

ActivationPeak activation_profile(const ModelBundle& model, NeuronHandle neuron, std::span<const TokenId> token_ids) {
  const NeuronHandle one[] = {neuron};
  const auto trace = forward(model, token_ids, neuron_only(one));
  return peak_of(trace.neuron_values(neuron));
}

std::vector<ScannedDocument> scan_corpus(const ModelBundle& model, const Tokenizer& tokenizer,
                                         std::span<const NeuronHandle> neurons,
                                         std::span<const CorpusDocument> corpus, const MineOptions& options) {
  if (neurons.empty()) throw Error(ErrorCode::InvalidArgument, "no neurons to scan for");
  if (options.window_tokens == 0 || options.window_tokens > static_cast<std::size_t>(model.config.max_positions)) {
    throw Error(ErrorCode::InvalidArgument, "window_tokens must be in [1, max_positions]");
  }
  const auto fwd = neuron_only(neurons);
  std::vector<std::optional<ScannedDocument>> slots(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) {
    const auto& doc = corpus[i];
    if (split_of(doc.doc_id) != options.split) return;
    auto ids = tokenizer.encode_prefix(normalize_line_breaks(doc.text), options.window_tokens);
    if (ids.size() < options.min_tokens || ids.empty()) return;
    const auto trace = forward(model, ids, fwd);
    ScannedDocument scanned;
    scanned.doc_index = i;
    for (const auto& n : neurons) scanned.peaks.push_back(peak_of(trace.neuron_values(n)));
    scanned.ids = std::move(ids);
    slots[i] = std::move(scanned);
  });
  std::vector<ScannedDocument> out;
  for (auto& s : slots) {
    if (s) out.push_back(std::move(*s));
  }
  return out;
}

std::vector<PromptRecord> select_top_prompts(const Tokenizer& tokenizer, std::span<const ScannedDocument> scanned,
                                             std::span<const CorpusDocument> corpus,
                                             std::span<const NeuronHandle> neurons, std::size_t neuron_index,
                                             std::size_t n_prompts, Split split) {
  if (n_prompts == 0) throw Error(ErrorCode::InvalidArgument, "n_prompts must be at least 1");
  if (scanned.size() < n_prompts) {
    throw Error(ErrorCode::CorpusExhausted, std::to_string(scanned.size()) + " usable " + std::string(to_string(split)) +
                                                "-split documents, " + std::to_string(n_prompts) + " requested");
  }
  std::vector<const ScannedDocument*> order;
  for (const auto& s : scanned) order.push_back(&s);
  std::sort(order.begin(), order.end(), [&](const ScannedDocument* a, const ScannedDocument* b) {
    const float pa = a->peaks[neuron_index].value;
    const float pb = b->peaks[neuron_index].value;
    if (pa != pb) return pa > pb;
    return corpus[a->doc_index].doc_id < corpus[b->doc_index].doc_id;
  });
  std::vector<PromptRecord> records;
  for (std::size_t i = 0; i < n_prompts; ++i) {
    const auto& s = *order[i];
    const auto& doc = corpus[s.doc_index];
    PromptRecord r;
    r.neuron = neurons[neuron_index];
    r.doc_id = doc.doc_id;
    r.subset = doc.subset;
    r.split = split;
    r.token_ids = s.ids;
    r.original_text = tokenizer.decode(s.ids);
    r.peak_activation = s.peaks[neuron_index].value;
    r.peak_position = s.peaks[neuron_index].position;
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<PromptRecord> mine_top_prompts(const ModelBundle& model, const Tokenizer& tokenizer, NeuronHandle neuron,
                                           std::span<const CorpusDocument> corpus, std::size_t n_prompts,
                                           const MineOptions& options) {
  if (corpus.empty()) throw Error(ErrorCode::CorpusExhausted, "empty corpus");
  const NeuronHandle neurons[] = {neuron};
  const auto scanned = scan_corpus(model, tokenizer, neurons, corpus, options);
  return select_top_prompts(tokenizer, scanned, corpus, neurons, 0, n_prompts, options.split);
}

double truncation_threshold(float peak_activation, double retain_fraction) {
  const double peak = peak_activation;
  return std::min(retain_fraction * peak, peak);
}

PromptRecord truncate_prompt(const ModelBundle& model, const Tokenizer& tokenizer, NeuronHandle neuron,
                             PromptRecord record, const TruncateOptions& options) {
  if (record.token_ids.empty() || record.peak_position >= record.token_ids.size()) {
    throw Error(ErrorCode::PositionOutOfRange, "record has no valid peak position");
  }
  const double threshold = truncation_threshold(record.peak_activation, options.retain_fraction);
  const NeuronHandle one[] = {neuron};
  const auto fwd = neuron_only(one);
  const std::size_t end = record.peak_position + 1;
  for (std::size_t length = 1; length <= end; ++length) {
    const auto suffix = std::span(record.token_ids).subspan(end - length, length);
    const auto trace = forward(model, suffix, fwd);
    const auto peak = peak_of(trace.neuron_values(neuron));
    if (static_cast<double>(peak.value) >= threshold) {
      record.truncated_ids.assign(suffix.begin(), suffix.end());
      record.truncated_text = tokenizer.decode(suffix);
      record.truncated_activation = peak.value;
      record.truncated_peak_position = peak.position;
      record.truncated = true;
      record.discarded = length > options.max_prompt_tokens;
      return record;
    }
  }
  throw Error(ErrorCode::NoValidTruncation,
              "no suffix of document '" + record.doc_id + "' reaches the activation threshold");
}

std::size_t diversity_count(std::span<const PromptRecord> records) {
  std::set<std::string> subsets;
  for (const auto& r : records) subsets.insert(r.subset);
  return subsets.size();
}

}  // namespace headscope
