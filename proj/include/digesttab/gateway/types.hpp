#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "digesttab/core/error.hpp"

namespace digesttab::gateway {

struct ChatMessage {
  std::string role;  // "user" | "assistant" | "system"
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model_id;
  std::optional<std::string> system;
  std::vector<ChatMessage> messages;
  int max_tokens = 1024;
  double temperature = 0.0;
  std::optional<std::vector<std::string>> stop;

  /// Throws ValidationError if messages are empty, max_tokens < 1 or temperature < 0.
  void validate() const;

  /// Canonical JSON (sorted keys); the cache is content-addressed on this form.
  nlohmann::json canonical() const;

  /// Convenience: a request with one user message.
  static ChatRequest single(std::string model_id, std::string user, std::optional<std::string> system = {},
                            int max_tokens = 1024);
};

enum class FinishReason { Stop, Length, Error };

const char* to_string(FinishReason r);
FinishReason finish_reason_from_string(const std::string& s);

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  /// Length means the text may be truncated; parsers must not trust its tail.
  FinishReason finish_reason = FinishReason::Stop;
  Usage usage;

  // Filled by the gateway, not part of the stored payload.
  std::string digest;
  bool from_cache = false;

  nlohmann::json payload() const;
  static ChatResponse from_payload(const nlohmann::json& j);
};

enum class ProviderFailure {
  Transport,
  RateLimited,
  Server,
  ContextOverflow,
  BadResponse,
  CacheMiss,
};

const char* to_string(ProviderFailure f);

class ProviderError : public Error {
 public:
  ProviderError(ProviderFailure failure, const std::string& message)
      : Error(ErrorKind::Provider, std::string(to_string(failure)) + ": " + message), failure_(failure) {}

  ProviderFailure failure() const noexcept { return failure_; }

  /// Transport-level failures worth retrying with backoff.
  bool retryable() const noexcept {
    return failure_ == ProviderFailure::Transport || failure_ == ProviderFailure::RateLimited ||
           failure_ == ProviderFailure::Server;
  }

 private:
  ProviderFailure failure_;
};

class TimeoutError : public Error {
 public:
  explicit TimeoutError(const std::string& m) : Error(ErrorKind::Timeout, m) {}
};

/// No embedding could be obtained (no provider and a cache miss, or the provider failed).
class EmbedderUnavailable : public Error {
 public:
  explicit EmbedderUnavailable(const std::string& m) : Error(ErrorKind::EmbedderUnavailable, m) {}
};

class AuthError : public Error {
 public:
  explicit AuthError(const std::string& m) : Error(ErrorKind::Auth, m) {}
};

}  // namespace digesttab::gateway
