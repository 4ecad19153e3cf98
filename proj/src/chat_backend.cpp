#include "headscope/chat_backend.hpp"

#include <httplib.h>

#include <algorithm>
#include <thread>

#include "headscope/errors.hpp"
#include "headscope/file_io.hpp"
#include "headscope/hashing.hpp"

namespace headscope {
namespace {

const std::string& last_user_message(const ChatRequest& request) {
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role == "user") return it->content;
  }
  throw Error(ErrorCode::InvalidArgument, "chat request has no user message");
}

// Splits "https://host:port/path" into "https://host:port" and "/path".
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidConfig, "endpoint lacks a scheme: " + url);
  const auto path_begin = url.find('/', scheme_end + 3);
  if (path_begin == std::string::npos) return {url, "/"};
  return {url.substr(0, path_begin), url.substr(path_begin)};
}

bool is_transient(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

nlohmann::json to_wire(const ChatRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", request.model},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens},
          {"messages", std::move(messages)}};
}

std::string content_from_wire(const nlohmann::json& response) {
  try {
    return response.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable, std::string("malformed completion response: ") + e.what());
  }
}

std::string fingerprint(const ChatRequest& request) { return sha256_hex(to_wire(request).dump()); }

HttpChatBackend::HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.max_attempts < 1) throw Error(ErrorCode::InvalidConfig, "max_attempts must be at least 1");
  std::tie(base_, path_) = split_url(config_.endpoint);
}

std::string HttpChatBackend::complete(const ChatRequest& request) {
  ChatRequest wire_request = request;
  if (wire_request.model.empty()) wire_request.model = config_.model;
  const std::string body = to_wire(wire_request).dump();
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  std::string last_error;
  auto backoff = config_.initial_backoff;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    httplib::Client client(base_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    auto result = client.Post(path_, headers, body, "application/json");
    if (!result) {
      last_error = "connection failed: " + httplib::to_string(result.error());
    } else if (result->status == 200) {
      nlohmann::json parsed;
      try {
        parsed = nlohmann::json::parse(result->body);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BackendUnavailable, std::string("response is not JSON: ") + e.what());
      }
      return content_from_wire(parsed);
    } else if (is_transient(result->status)) {
      last_error = "HTTP " + std::to_string(result->status);
    } else {
      throw Error(ErrorCode::BackendUnavailable,
                  "HTTP " + std::to_string(result->status) + " from " + config_.endpoint + ": " + result->body);
    }
    if (attempt < config_.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw Error(ErrorCode::BackendUnavailable,
              config_.endpoint + " failed after " + std::to_string(config_.max_attempts) + " attempts: " + last_error);
}

StubBackend::StubBackend(std::vector<Rule> rules, std::optional<std::string> fallback)
    : rules_(std::move(rules)), fallback_(std::move(fallback)) {}

std::string StubBackend::complete(const ChatRequest& request) {
  const std::string& prompt = last_user_message(request);
  for (const auto& rule : rules_) {
    if (prompt.find(rule.contains) != std::string::npos) return rule.reply;
  }
  if (fallback_) return *fallback_;
  throw Error(ErrorCode::BackendUnavailable, "no stub rule matches the request");
}

StubBackend StubBackend::from_file(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
    std::vector<Rule> rules;
    for (const auto& r : j.at("rules")) rules.push_back({r.at("contains").get<std::string>(), r.at("reply").get<std::string>()});
    std::optional<std::string> fallback;
    if (j.contains("fallback")) fallback = j["fallback"].get<std::string>();
    return StubBackend(std::move(rules), std::move(fallback));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
}

CoinStubBackend::CoinStubBackend(std::uint64_t seed, std::string explanation)
    : seed_(seed), explanation_(std::move(explanation)) {}

std::string CoinStubBackend::complete(const ChatRequest& request) {
  const std::string& prompt = last_user_message(request);
  if (prompt.find("Is the given example an active example?") == std::string::npos) return explanation_;
  const std::string digest = sha256_hex(std::to_string(seed_) + "\n" + prompt);
  return (digest.back() - '0') % 2 == 0 ? "Yes" : "No";
}

std::string RecordingBackend::complete(const ChatRequest& request) {
  std::string reply = inner_.complete(request);
  std::lock_guard lock(mutex_);
  entries_.push_back({fingerprint(request), to_wire(request), reply});
  return reply;
}

std::vector<TranscriptEntry> RecordingBackend::transcript() const {
  std::lock_guard lock(mutex_);
  auto out = entries_;
  std::stable_sort(out.begin(), out.end(),
                   [](const TranscriptEntry& a, const TranscriptEntry& b) { return a.fingerprint < b.fingerprint; });
  return out;
}

ReplayBackend::ReplayBackend(const std::vector<TranscriptEntry>& entries) {
  for (const auto& e : entries) replies_.emplace(e.fingerprint, e.reply);
}

std::string ReplayBackend::complete(const ChatRequest& request) {
  auto it = replies_.find(fingerprint(request));
  if (it == replies_.end()) throw Error(ErrorCode::BackendUnavailable, "request not present in the replay transcript");
  return it->second;
}

nlohmann::json transcript_to_json(const std::vector<TranscriptEntry>& entries) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : entries) out.push_back({{"fingerprint", e.fingerprint}, {"request", e.request}, {"reply", e.reply}});
  return out;
}

std::vector<TranscriptEntry> transcript_from_json(const nlohmann::json& j) {
  std::vector<TranscriptEntry> out;
  try {
    for (const auto& e : j) {
      out.push_back({e.at("fingerprint").get<std::string>(), e.at("request"), e.at("reply").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("malformed transcript: ") + e.what());
  }
  return out;
}

}  // namespace headscope
