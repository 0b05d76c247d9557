#pragma once

#include <chrono>
#include <string>

#include "digesttab/gateway/provider.hpp"

namespace digesttab::gateway {

struct HttpEndpoint {
  /// e.g. "https://api.openai.com/v1" or "http://127.0.0.1:8080/v1"
  std::string base_url;
  std::string api_key;
  std::chrono::seconds timeout{120};
};

/// Splits "scheme://host[:port]/prefix" into ("scheme://host[:port]", "/prefix").
std::pair<std::string, std::string> split_base_url(const std::string& base_url);

/// POST {base}/chat/completions with an OpenAI-style body.
class OpenAiChatProvider : public ChatProvider {
 public:
  explicit OpenAiChatProvider(HttpEndpoint endpoint, std::string name = "openai");

  std::string name() const override { return name_; }
  ChatResponse complete(const ChatRequest& request) override;

 private:
  HttpEndpoint endpoint_;
  std::string name_;
};

/// POST {base}/embeddings with an OpenAI-style body.
class OpenAiEmbedProvider : public EmbedProvider {
 public:
  explicit OpenAiEmbedProvider(HttpEndpoint endpoint, std::string name = "openai");

  std::string name() const override { return name_; }
  std::vector<Vector> embed(const std::string& model_id, const std::vector<std::string>& texts) override;

 private:
  HttpEndpoint endpoint_;
  std::string name_;
};

/// Maps an HTTP status and body to the gateway error taxonomy (throws).
[[noreturn]] void throw_for_status(int status, const std::string& body);

}  // namespace digesttab::gateway
