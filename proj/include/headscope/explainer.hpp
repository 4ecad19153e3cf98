#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "headscope/chat_backend.hpp"
#include "headscope/model_io.hpp"

namespace headscope {

inline constexpr std::string_view kExplanationStem = "This attention head is active when the document";

struct ExplanationRequest {
  std::string token_text;
  std::vector<std::string> active_prompts;
  std::vector<std::string> inactive_prompts;
  std::size_t max_examples = 20;
};

struct HeadExplanation {
  NeuronHandle neuron;
  HeadId head;
  /// Completion of the stem, whitespace collapsed to one paragraph.
  std::string explanation_text;
  std::string request_fingerprint;
};

struct ClassificationOutcome {
  std::string prompt_id;
  bool predicted_active = false;
  bool ground_truth_active = false;
  std::string raw_reply;
};

/// Printed: E = (TP/(TP+FP) + TN/(TN+FN)) / 2.
/// Prose: mean of the true positive and true negative rates,
/// (TP/(TP+FN) + TN/(TN+FP)) / 2.
enum class ScoreVariant { Printed, Prose };

struct ExplanationScore {
  HeadId head;
  int tp = 0, fp = 0, tn = 0, fn = 0;
  std::optional<double> score;
  bool discarded = false;
  /// Why the score is missing or used only one term.
  std::string note;
};

struct LlmSettings {
  std::string model = "gpt-4";
  double temperature = 0.0;
  int explanation_max_tokens = 256;
  int classification_max_tokens = 8;
};

std::string build_explanation_prompt(const ExplanationRequest& request);
std::string build_classification_prompt(std::string_view explanation_text, std::string_view prompt_text);

ChatRequest explanation_chat_request(const ExplanationRequest& request, const LlmSettings& settings = {});
ChatRequest classification_chat_request(std::string_view explanation_text, std::string_view prompt_text,
                                        const LlmSettings& settings = {});

/// Collapses whitespace runs to single spaces and trims.
std::string single_paragraph(std::string_view text);

HeadExplanation generate_explanation(ChatBackend& backend, const ExplanationRequest& request, NeuronHandle neuron,
                                     HeadId head, const LlmSettings& settings = {});

/// Leading Yes/No word, case-insensitive, ignoring leading whitespace and quotes.
std::optional<bool> parse_yes_no(std::string_view reply);

/// Asks once, reprompts once on an unparseable reply, then throws UnparseableReply.
ClassificationOutcome classify_prompt(ChatBackend& backend, const HeadExplanation& explanation,
                                      const std::string& prompt_id, std::string_view prompt_text,
                                      bool ground_truth_active, const LlmSettings& settings = {});

ExplanationScore explanation_score(std::span<const ClassificationOutcome> outcomes,
                                   ScoreVariant variant = ScoreVariant::Printed, HeadId head = {});

/// Score from raw counts, with the same degenerate-case handling.
ExplanationScore score_counts(int tp, int fp, int tn, int fn, ScoreVariant variant = ScoreVariant::Printed);

}  // namespace headscope
