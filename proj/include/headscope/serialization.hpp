#pragma once

#include <json.hpp>

#include "headscope/ablation_lab.hpp"
#include "headscope/analytics.hpp"
#include "headscope/errors.hpp"
#include "headscope/explainer.hpp"
#include "headscope/head_attribution.hpp"
#include "headscope/neuron_scout.hpp"
#include "headscope/prompt_miner.hpp"

namespace headscope {

// JSON forms of the records kept in a run directory. Every from_json throws
// nlohmann::json exceptions on missing or mistyped fields; callers wrap them.

void to_json(nlohmann::json& j, const NeuronHandle& n);
void from_json(const nlohmann::json& j, NeuronHandle& n);
void to_json(nlohmann::json& j, const HeadId& h);
void from_json(const nlohmann::json& j, HeadId& h);

void to_json(nlohmann::json& j, const ScoredToken& t);
void from_json(const nlohmann::json& j, ScoredToken& t);
void to_json(nlohmann::json& j, const NextTokenNeuron& n);
void from_json(const nlohmann::json& j, NextTokenNeuron& n);

void to_json(nlohmann::json& j, const PromptRecord& r);
void from_json(const nlohmann::json& j, PromptRecord& r);

/// Scores and flags are stored as [layer][head] arrays.
void to_json(nlohmann::json& j, const AttributionMatrix& m);
void from_json(const nlohmann::json& j, AttributionMatrix& m);
void to_json(nlohmann::json& j, const HeadActivitySummary& s);
void from_json(const nlohmann::json& j, HeadActivitySummary& s);

void to_json(nlohmann::json& j, const HeadExplanation& e);
void from_json(const nlohmann::json& j, HeadExplanation& e);
void to_json(nlohmann::json& j, const ClassificationOutcome& o);
void from_json(const nlohmann::json& j, ClassificationOutcome& o);
/// A missing score is written as null.
void to_json(nlohmann::json& j, const ExplanationScore& s);
void from_json(const nlohmann::json& j, ExplanationScore& s);

void to_json(nlohmann::json& j, const AblationRecord& r);
void from_json(const nlohmann::json& j, AblationRecord& r);
void to_json(nlohmann::json& j, const AblationReport& r);
void from_json(const nlohmann::json& j, AblationReport& r);

void to_json(nlohmann::json& j, const KsResult& k);
void from_json(const nlohmann::json& j, KsResult& k);
void to_json(nlohmann::json& j, const ScoreDistribution& d);
void from_json(const nlohmann::json& j, ScoreDistribution& d);
void to_json(nlohmann::json& j, const BaselineComparison& c);

std::string to_string(ScoreVariant variant);
ScoreVariant score_variant_from_string(std::string_view name);
std::string to_string(AblationMode mode);
AblationMode ablation_mode_from_string(std::string_view name);
std::string to_string(ScoreKind kind);
ScoreKind score_kind_from_string(std::string_view name);

/// "{layer}-{neuron}", the file stem used under prompts/ and attribution/.
std::string neuron_key(NeuronHandle n);

/// Parses JSON text, turning syntax and shape errors into `code`.
nlohmann::json parse_json(std::string_view text, const std::string& origin, ErrorCode code);

}  // namespace headscope
