#include "headscope/explainer.hpp"

#include <cctype>

#include "headscope/errors.hpp"

namespace headscope {
namespace {

constexpr std::string_view kClassificationQuestion = "Is the given example an active example? (Yes/No)";
constexpr std::string_view kReprompt = "Please answer with Yes or No only.";

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::string build_explanation_prompt(const ExplanationRequest& request) {
  if (request.active_prompts.empty() || request.inactive_prompts.empty()) {
    throw Error(ErrorCode::EmptyPartition, "explanations need at least one active and one inactive example");
  }
  if (request.active_prompts.size() + request.inactive_prompts.size() > request.max_examples) {
    throw Error(ErrorCode::InvalidArgument,
                "more than " + std::to_string(request.max_examples) + " examples in one explanation request");
  }
  std::string out;
  out += "We are studying attention heads in a transformer architecture neural network. "
         "Each attention head looks for some particular thing in a short document.\n\n";
  out += "This attention head in particular helps to predict that the last token is \"" + request.token_text +
         "\", but it is only active in some documents and not others.\n\n";
  out += "Look at the documents and explain what makes the attention head active, "
         "taking into consideration the inactive examples.\n\n";
  out += "Examples where the attention head is active:\n";
  for (const auto& p : request.active_prompts) out += "- " + p + "\n";
  out += "\nExamples where the attention head is inactive:\n";
  for (const auto& p : request.inactive_prompts) out += "- " + p + "\n";
  out += "\n\nExplanation: ";
  out += kExplanationStem;
  return out;
}

std::string build_classification_prompt(std::string_view explanation_text, std::string_view prompt_text) {
  std::string out;
  out += kClassificationQuestion;
  out += "\n\n";
  out += kExplanationStem;
  out += " ";
  out += explanation_text;
  out += "\n\nExample:\n\"";
  out += prompt_text;
  out += "\"\n\nAnswer:";
  return out;
}

ChatRequest explanation_chat_request(const ExplanationRequest& request, const LlmSettings& settings) {
  return {settings.model, settings.temperature, settings.explanation_max_tokens,
          {{"user", build_explanation_prompt(request)}}};
}

ChatRequest classification_chat_request(std::string_view explanation_text, std::string_view prompt_text,
                                        const LlmSettings& settings) {
  return {settings.model, settings.temperature, settings.classification_max_tokens,
          {{"user", build_classification_prompt(explanation_text, prompt_text)}}};
}

std::string single_paragraph(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

HeadExplanation generate_explanation(ChatBackend& backend, const ExplanationRequest& request, NeuronHandle neuron,
                                     HeadId head, const LlmSettings& settings) {
  const auto chat = explanation_chat_request(request, settings);
  const std::string reply = single_paragraph(backend.complete(chat));
  if (reply.empty()) throw Error(ErrorCode::EmptyCompletion, "backend returned an empty explanation");
  return {neuron, head, reply, fingerprint(chat)};
}

std::optional<bool> parse_yes_no(std::string_view reply) {
  std::size_t i = 0;
  while (i < reply.size() && (is_space(reply[i]) || reply[i] == '"' || reply[i] == '\'')) ++i;
  std::string word;
  while (i < reply.size() && std::isalpha(static_cast<unsigned char>(reply[i])) != 0) {
    word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(reply[i]))));
    ++i;
  }
  if (word == "yes") return true;
  if (word == "no") return false;
  return std::nullopt;
}

ClassificationOutcome classify_prompt(ChatBackend& backend, const HeadExplanation& explanation,
                                      const std::string& prompt_id, std::string_view prompt_text,
                                      bool ground_truth_active, const LlmSettings& settings) {
  if (explanation.explanation_text.empty()) throw Error(ErrorCode::EmptyCompletion, "explanation is empty");
  auto chat = classification_chat_request(explanation.explanation_text, prompt_text, settings);
  std::string reply = backend.complete(chat);
  auto parsed = parse_yes_no(reply);
  if (!parsed) {
    chat.messages.push_back({"assistant", reply});
    chat.messages.push_back({"user", std::string(kReprompt)});
    reply = backend.complete(chat);
    parsed = parse_yes_no(reply);
    if (!parsed) {
      throw Error(ErrorCode::UnparseableReply, "reply to prompt '" + prompt_id + "' is neither Yes nor No: " + reply);
    }
  }
  return {prompt_id, *parsed, ground_truth_active, reply};
}

ExplanationScore score_counts(int tp, int fp, int tn, int fn, ScoreVariant variant) {
  ExplanationScore s;
  s.tp = tp;
  s.fp = fp;
  s.tn = tn;
  s.fn = fn;
  if (tp + fn == 0 || tn + fp == 0) {
    s.discarded = true;
    s.note = "single-class ground truth";
    return s;
  }
  int num1 = tp, den1 = tp + fp, num2 = tn, den2 = tn + fn;
  if (variant == ScoreVariant::Prose) {
    den1 = tp + fn;
    den2 = tn + fp;
  }
  const bool has1 = den1 > 0;
  const bool has2 = den2 > 0;
  const double t1 = has1 ? static_cast<double>(num1) / den1 : 0.0;
  const double t2 = has2 ? static_cast<double>(num2) / den2 : 0.0;
  if (has1 && has2) {
    s.score = 0.5 * (t1 + t2);
  } else if (has1) {
    s.score = t1;
    s.note = "negative term undefined; score is the positive term";
  } else if (has2) {
    s.score = t2;
    s.note = "positive term undefined; score is the negative term";
  } else {
    s.discarded = true;
    s.note = "both terms undefined";
  }
  return s;
}

ExplanationScore explanation_score(std::span<const ClassificationOutcome> outcomes, ScoreVariant variant,
                                   HeadId head) {
  if (outcomes.empty()) throw Error(ErrorCode::EmptyInput, "no classification outcomes");
  int tp = 0, fp = 0, tn = 0, fn = 0;
  for (const auto& o : outcomes) {
    if (o.predicted_active) {
      (o.ground_truth_active ? tp : fp)++;
    } else {
      (o.ground_truth_active ? fn : tn)++;
    }
  }
  auto s = score_counts(tp, fp, tn, fn, variant);
  s.head = head;
  return s;
}

}  // namespace headscope
