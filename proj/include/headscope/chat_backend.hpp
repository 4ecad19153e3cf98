#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace headscope {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  double temperature = 0.0;
  int max_tokens = 256;
  std::vector<ChatMessage> messages;
};

/// {model, temperature, max_tokens, messages: [{role, content}]}
nlohmann::json to_wire(const ChatRequest& request);
/// Extracts choices[0].message.content; BackendUnavailable if absent.
std::string content_from_wire(const nlohmann::json& response);
/// SHA-256 of the compact wire form.
std::string fingerprint(const ChatRequest& request);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Returns the raw completion text. Implementations are thread-safe.
  virtual std::string complete(const ChatRequest& request) = 0;
};

struct HttpBackendConfig {
  /// Full URL of the chat-completions endpoint, http or https.
  std::string endpoint;
  std::string model;
  std::string api_key;
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{120};
};

/// Chat-completion client. Connection failures, 429 and 5xx responses are
/// retried with exponential backoff; other failures are final.
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendConfig config);
  std::string complete(const ChatRequest& request) override;

 private:
  HttpBackendConfig config_;
  std::string base_;
  std::string path_;
};

/// Offline backend answering from an ordered rule table: the first rule
/// whose `contains` text occurs in the last user message wins.
class StubBackend : public ChatBackend {
 public:
  struct Rule {
    std::string contains;
    std::string reply;
  };

  StubBackend(std::vector<Rule> rules, std::optional<std::string> fallback = std::nullopt);
  std::string complete(const ChatRequest& request) override;

  /// Rules from a JSON file: {"rules": [{"contains", "reply"}], "fallback": "..."}.
  static StubBackend from_file(const std::filesystem::path& path);
  const std::vector<Rule>& rules() const { return rules_; }

 private:
  std::vector<Rule> rules_;
  std::optional<std::string> fallback_;
};

/// Classification stub that answers Yes/No by a deterministic fair coin
/// keyed on (seed, prompt), and `explanation` for every other request.
class CoinStubBackend : public ChatBackend {
 public:
  CoinStubBackend(std::uint64_t seed, std::string explanation);
  std::string complete(const ChatRequest& request) override;

 private:
  std::uint64_t seed_;
  std::string explanation_;
};

struct TranscriptEntry {
  std::string fingerprint;
  nlohmann::json request;
  std::string reply;
};

/// Forwards to an inner backend and records every exchange.
class RecordingBackend : public ChatBackend {
 public:
  explicit RecordingBackend(ChatBackend& inner) : inner_(inner) {}
  std::string complete(const ChatRequest& request) override;
  /// Entries sorted by fingerprint, so the order does not depend on scheduling.
  std::vector<TranscriptEntry> transcript() const;

 private:
  ChatBackend& inner_;
  mutable std::mutex mutex_;
  std::vector<TranscriptEntry> entries_;
};

/// Answers from a stored transcript; unknown requests are BackendUnavailable.
class ReplayBackend : public ChatBackend {
 public:
  explicit ReplayBackend(const std::vector<TranscriptEntry>& entries);
  std::string complete(const ChatRequest& request) override;

 private:
  std::map<std::string, std::string> replies_;
};

nlohmann::json transcript_to_json(const std::vector<TranscriptEntry>& entries);
std::vector<TranscriptEntry> transcript_from_json(const nlohmann::json& j);

}  // namespace headscope
