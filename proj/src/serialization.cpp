#include "headscope/serialization.hpp"

namespace headscope {
namespace {

using nlohmann::json;

json head_grid(const AttributionMatrix& m, auto&& value) {
  json grid = json::array();
  for (int l = 0; l < m.n_layers; ++l) {
    json row = json::array();
    for (int h = 0; h < m.n_heads; ++h) row.push_back(value(m.index({l, h})));
    grid.push_back(std::move(row));
  }
  return grid;
}

}  // namespace

void to_json(json& j, const NeuronHandle& n) { j = {{"layer", n.layer}, {"neuron", n.neuron}}; }
void from_json(const json& j, NeuronHandle& n) {
  n.layer = j.at("layer").get<int>();
  n.neuron = j.at("neuron").get<int>();
}

void to_json(json& j, const HeadId& h) { j = {{"layer", h.layer}, {"head", h.head}}; }
void from_json(const json& j, HeadId& h) {
  h.layer = j.at("layer").get<int>();
  h.head = j.at("head").get<int>();
}

void to_json(json& j, const ScoredToken& t) { j = {{"token_id", t.token}, {"score", t.score}}; }
void from_json(const json& j, ScoredToken& t) {
  t.token = j.at("token_id").get<TokenId>();
  t.score = j.at("score").get<double>();
}

void to_json(json& j, const NextTokenNeuron& n) {
  j = {{"layer", n.handle.layer}, {"neuron", n.handle.neuron}, {"score", n.score},
       {"token_id", n.token},     {"token_text", n.token_text}, {"runners_up", n.runners_up}};
}
void from_json(const json& j, NextTokenNeuron& n) {
  from_json(j, n.handle);
  n.score = j.at("score").get<double>();
  n.token = j.at("token_id").get<TokenId>();
  n.token_text = j.at("token_text").get<std::string>();
  n.runners_up = j.value("runners_up", std::vector<ScoredToken>{});
}

void to_json(json& j, const PromptRecord& r) {
  j = {{"neuron", r.neuron},
       {"doc_id", r.doc_id},
       {"subset", r.subset},
       {"split", std::string(to_string(r.split))},
       {"original_text", r.original_text},
       {"token_ids", r.token_ids},
       {"peak_activation", r.peak_activation},
       {"peak_position", r.peak_position},
       {"truncated_text", r.truncated_text},
       {"truncated_ids", r.truncated_ids},
       {"truncated_activation", r.truncated_activation},
       {"truncated_peak_position", r.truncated_peak_position},
       {"truncated", r.truncated},
       {"discarded", r.discarded}};
}
void from_json(const json& j, PromptRecord& r) {
  r.neuron = j.at("neuron").get<NeuronHandle>();
  r.doc_id = j.at("doc_id").get<std::string>();
  r.subset = j.at("subset").get<std::string>();
  r.split = split_from_string(j.at("split").get<std::string>());
  r.original_text = j.at("original_text").get<std::string>();
  r.token_ids = j.at("token_ids").get<std::vector<TokenId>>();
  r.peak_activation = j.at("peak_activation").get<float>();
  r.peak_position = j.at("peak_position").get<std::size_t>();
  r.truncated_text = j.at("truncated_text").get<std::string>();
  r.truncated_ids = j.at("truncated_ids").get<std::vector<TokenId>>();
  r.truncated_activation = j.at("truncated_activation").get<float>();
  r.truncated_peak_position = j.at("truncated_peak_position").get<std::size_t>();
  r.truncated = j.at("truncated").get<bool>();
  r.discarded = j.at("discarded").get<bool>();
}

void to_json(json& j, const AttributionMatrix& m) {
  j = {{"neuron", m.neuron},
       {"prompt_id", m.prompt_id},
       {"position", m.position},
       {"n_layers", m.n_layers},
       {"n_heads", m.n_heads},
       {"scores", head_grid(m, [&](std::size_t i) { return json(m.scores[i]); })},
       {"eligible", head_grid(m, [&](std::size_t i) { return json(m.eligible[i] != 0); })},
       {"active", head_grid(m, [&](std::size_t i) { return json(m.active[i] != 0); })},
       {"mean", m.mean},
       {"stddev", m.stddev},
       {"sigma_multiplier", m.sigma_multiplier}};
}
void from_json(const json& j, AttributionMatrix& m) {
  m.neuron = j.at("neuron").get<NeuronHandle>();
  m.prompt_id = j.at("prompt_id").get<std::string>();
  m.position = j.at("position").get<std::size_t>();
  m.n_layers = j.at("n_layers").get<int>();
  m.n_heads = j.at("n_heads").get<int>();
  const auto n = static_cast<std::size_t>(m.n_layers) * static_cast<std::size_t>(m.n_heads);
  m.scores.assign(n, 0.0);
  m.eligible.assign(n, 0);
  m.active.assign(n, 0);
  for (int l = 0; l < m.n_layers; ++l) {
    for (int h = 0; h < m.n_heads; ++h) {
      const auto i = m.index({l, h});
      m.scores[i] = j.at("scores").at(l).at(h).get<double>();
      m.eligible[i] = j.at("eligible").at(l).at(h).get<bool>() ? 1 : 0;
      m.active[i] = j.at("active").at(l).at(h).get<bool>() ? 1 : 0;
    }
  }
  m.mean = j.at("mean").get<double>();
  m.stddev = j.at("stddev").get<double>();
  m.sigma_multiplier = j.at("sigma_multiplier").get<double>();
}

void to_json(json& j, const HeadActivitySummary& s) {
  j = {{"neuron", s.neuron},
       {"head", s.head},
       {"active_fraction", s.active_fraction},
       {"per_prompt_active", s.per_prompt_active}};
}
void from_json(const json& j, HeadActivitySummary& s) {
  s.neuron = j.at("neuron").get<NeuronHandle>();
  s.head = j.at("head").get<HeadId>();
  s.active_fraction = j.at("active_fraction").get<double>();
  s.per_prompt_active = j.at("per_prompt_active").get<std::map<std::string, bool>>();
}

void to_json(json& j, const HeadExplanation& e) {
  j = {{"neuron", e.neuron},
       {"head", e.head},
       {"explanation_text", e.explanation_text},
       {"request_fingerprint", e.request_fingerprint}};
}
void from_json(const json& j, HeadExplanation& e) {
  e.neuron = j.at("neuron").get<NeuronHandle>();
  e.head = j.at("head").get<HeadId>();
  e.explanation_text = j.at("explanation_text").get<std::string>();
  e.request_fingerprint = j.at("request_fingerprint").get<std::string>();
}

void to_json(json& j, const ClassificationOutcome& o) {
  j = {{"prompt_id", o.prompt_id},
       {"predicted_active", o.predicted_active},
       {"ground_truth_active", o.ground_truth_active},
       {"raw_reply", o.raw_reply}};
}
void from_json(const json& j, ClassificationOutcome& o) {
  o.prompt_id = j.at("prompt_id").get<std::string>();
  o.predicted_active = j.at("predicted_active").get<bool>();
  o.ground_truth_active = j.at("ground_truth_active").get<bool>();
  o.raw_reply = j.at("raw_reply").get<std::string>();
}

void to_json(json& j, const ExplanationScore& s) {
  j = {{"head", s.head}, {"tp", s.tp}, {"fp", s.fp}, {"tn", s.tn}, {"fn", s.fn},
       {"score", s.score ? json(*s.score) : json(nullptr)}, {"discarded", s.discarded}, {"note", s.note}};
}
void from_json(const json& j, ExplanationScore& s) {
  s.head = j.at("head").get<HeadId>();
  s.tp = j.at("tp").get<int>();
  s.fp = j.at("fp").get<int>();
  s.tn = j.at("tn").get<int>();
  s.fn = j.at("fn").get<int>();
  s.score.reset();
  if (!j.at("score").is_null()) s.score = j.at("score").get<double>();
  s.discarded = j.at("discarded").get<bool>();
  s.note = j.at("note").get<std::string>();
}

void to_json(json& j, const AblationRecord& r) {
  j = {{"neuron", r.neuron},
       {"head", r.head},
       {"prompt_id", r.prompt_id},
       {"head_was_active", r.head_was_active},
       {"prob_original", r.prob_original},
       {"prob_ablated", r.prob_ablated},
       {"delta", r.delta},
       {"neuron_act_original", r.neuron_act_original},
       {"neuron_act_ablated", r.neuron_act_ablated}};
}
void from_json(const json& j, AblationRecord& r) {
  r.neuron = j.at("neuron").get<NeuronHandle>();
  r.head = j.at("head").get<HeadId>();
  r.prompt_id = j.at("prompt_id").get<std::string>();
  r.head_was_active = j.at("head_was_active").get<bool>();
  r.prob_original = j.at("prob_original").get<double>();
  r.prob_ablated = j.at("prob_ablated").get<double>();
  r.delta = j.at("delta").get<double>();
  r.neuron_act_original = j.at("neuron_act_original").get<float>();
  r.neuron_act_ablated = j.at("neuron_act_ablated").get<float>();
}

void to_json(json& j, const AblationReport& r) {
  j = {{"records", r.records},
       {"ks_statistic", r.ks_statistic},
       {"ks_p_value", r.ks_p_value},
       {"mean_delta_active", r.mean_delta_active},
       {"mean_delta_inactive", r.mean_delta_inactive},
       {"n_active", r.n_active},
       {"n_inactive", r.n_inactive}};
}
void from_json(const json& j, AblationReport& r) {
  r.records = j.at("records").get<std::vector<AblationRecord>>();
  r.ks_statistic = j.at("ks_statistic").get<double>();
  r.ks_p_value = j.at("ks_p_value").get<double>();
  r.mean_delta_active = j.at("mean_delta_active").get<double>();
  r.mean_delta_inactive = j.at("mean_delta_inactive").get<double>();
  r.n_active = j.at("n_active").get<std::size_t>();
  r.n_inactive = j.at("n_inactive").get<std::size_t>();
}

void to_json(json& j, const KsResult& k) { j = {{"d", k.d}, {"p", k.p}}; }
void from_json(const json& j, KsResult& k) {
  k.d = j.at("d").get<double>();
  k.p = j.at("p").get<double>();
}

void to_json(json& j, const ScoreDistribution& d) {
  j = {{"label", d.label},
       {"n", d.values.size()},
       {"mean", d.values.empty() ? json(nullptr) : json(d.mean)},
       {"skewness", d.skewness ? json(*d.skewness) : json(nullptr)},
       {"values", d.values}};
}
void from_json(const json& j, ScoreDistribution& d) {
  d = ScoreDistribution::from_values(j.at("label").get<std::string>(), j.at("values").get<std::vector<double>>());
}

void to_json(json& j, const BaselineComparison& c) {
  j = {{"primary", c.primary_label},
       {"baseline", c.baseline_label},
       {"mean_difference", c.mean_difference},
       {"skewness_difference", c.skewness_difference ? json(*c.skewness_difference) : json(nullptr)},
       {"ks", c.ks}};
}

std::string to_string(ScoreVariant variant) { return variant == ScoreVariant::Printed ? "printed" : "prose"; }
ScoreVariant score_variant_from_string(std::string_view name) {
  if (name == "printed") return ScoreVariant::Printed;
  if (name == "prose") return ScoreVariant::Prose;
  throw Error(ErrorCode::InvalidConfig, "score variant must be printed or prose, got '" + std::string(name) + "'");
}

std::string to_string(AblationMode mode) { return mode == AblationMode::Zero ? "zero" : "mean"; }
AblationMode ablation_mode_from_string(std::string_view name) {
  if (name == "zero") return AblationMode::Zero;
  if (name == "mean") return AblationMode::Mean;
  throw Error(ErrorCode::InvalidConfig, "ablation mode must be zero or mean, got '" + std::string(name) + "'");
}

std::string to_string(ScoreKind kind) { return kind == ScoreKind::Dot ? "dot" : "cosine"; }
ScoreKind score_kind_from_string(std::string_view name) {
  if (name == "dot") return ScoreKind::Dot;
  if (name == "cosine") return ScoreKind::Cosine;
  throw Error(ErrorCode::InvalidConfig, "score kind must be dot or cosine, got '" + std::string(name) + "'");
}

std::string neuron_key(NeuronHandle n) { return std::to_string(n.layer) + "-" + std::to_string(n.neuron); }

json parse_json(std::string_view text, const std::string& origin, ErrorCode code) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(code, origin + ": " + e.what());
  }
}

}  // namespace headscope
