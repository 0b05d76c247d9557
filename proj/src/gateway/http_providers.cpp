#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "digesttab/gateway/http_providers.hpp"

namespace digesttab::gateway {

std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("base URL needs a scheme: " + base_url);
  auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {base_url, ""};
  std::string prefix = base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, path_start), prefix};
}

void throw_for_status(int status, const std::string& body) {
  const std::string snippet = body.substr(0, 300);
  if (status == 401 || status == 403) throw AuthError("HTTP " + std::to_string(status) + ": " + snippet);
  if (status == 408 || status == 504) throw TimeoutError("HTTP " + std::to_string(status) + ": " + snippet);
  if (status == 429) throw ProviderError(ProviderFailure::RateLimited, snippet);
  if (status >= 500) throw ProviderError(ProviderFailure::Server, "HTTP " + std::to_string(status) + ": " + snippet);
  if (body.find("context_length_exceeded") != std::string::npos ||
      body.find("maximum context length") != std::string::npos ||
      body.find("too many tokens") != std::string::npos) {
    throw ProviderError(ProviderFailure::ContextOverflow, snippet);
  }
  throw ProviderError(ProviderFailure::BadResponse, "HTTP " + std::to_string(status) + ": " + snippet);
}

namespace {

nlohmann::json post_json(const HttpEndpoint& ep, const std::string& path, const nlohmann::json& body) {
  auto [host, prefix] = split_base_url(ep.base_url);
  httplib::Client client(host);
  client.set_connection_timeout(ep.timeout);
  client.set_read_timeout(ep.timeout);
  client.set_write_timeout(ep.timeout);
  httplib::Headers headers;
  if (!ep.api_key.empty()) headers.emplace("Authorization", "Bearer " + ep.api_key);
  auto res = client.Post(prefix + path, headers, body.dump(), "application/json");
  if (!res) {
    auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
      throw TimeoutError("request to " + host + prefix + path + " timed out (" + httplib::to_string(err) + ")");
    }
    throw ProviderError(ProviderFailure::Transport, httplib::to_string(err) + " contacting " + host);
  }
  if (res->status < 200 || res->status >= 300) throw_for_status(res->status, res->body);
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(ProviderFailure::BadResponse, std::string("response is not JSON: ") + e.what());
  }
}

}  // namespace

OpenAiChatProvider::OpenAiChatProvider(HttpEndpoint endpoint, std::string name)
    : endpoint_(std::move(endpoint)), name_(std::move(name)) {}

ChatResponse OpenAiChatProvider::complete(const ChatRequest& request) {
  nlohmann::json body;
  body["model"] = request.model_id;
  nlohmann::json msgs = nlohmann::json::array();
  if (request.system) msgs.push_back({{"role", "system"}, {"content", *request.system}});
  for (const auto& m : request.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  body["messages"] = std::move(msgs);
  body["max_tokens"] = request.max_tokens;
  body["temperature"] = request.temperature;
  if (request.stop) body["stop"] = *request.stop;

  auto j = post_json(endpoint_, "/chat/completions", body);
  try {
    const auto& choice = j.at("choices").at(0);
    ChatResponse r;
    const auto& content = choice.at("message").at("content");
    r.text = content.is_null() ? "" : content.get<std::string>();
    r.finish_reason = finish_reason_from_string(choice.value("finish_reason", "stop"));
    if (j.contains("usage")) {
      r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      r.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(ProviderFailure::BadResponse, std::string("unexpected chat response shape: ") + e.what());
  }
}

OpenAiEmbedProvider::OpenAiEmbedProvider(HttpEndpoint endpoint, std::string name)
    : endpoint_(std::move(endpoint)), name_(std::move(name)) {}

std::vector<Vector> OpenAiEmbedProvider::embed(const std::string& model_id, const std::vector<std::string>& texts) {
  nlohmann::json body = {{"model", model_id}, {"input", texts}};
  auto j = post_json(endpoint_, "/embeddings", body);
  try {
    std::vector<Vector> out(texts.size());
    for (const auto& item : j.at("data")) {
      auto idx = item.value("index", 0);
      if (idx < 0 || static_cast<std::size_t>(idx) >= out.size()) {
        throw ProviderError(ProviderFailure::BadResponse, "embedding index out of range");
      }
      out[static_cast<std::size_t>(idx)] = item.at("embedding").get<Vector>();
    }
    for (const auto& v : out) {
      if (v.empty()) throw ProviderError(ProviderFailure::BadResponse, "missing embedding in response");
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(ProviderFailure::BadResponse, std::string("unexpected embedding response: ") + e.what());
  }
}

}  // namespace digesttab::gateway
