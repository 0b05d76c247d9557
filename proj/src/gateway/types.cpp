#include "digesttab/gateway/types.hpp"

namespace digesttab::gateway {

void ChatRequest::validate() const {
  if (messages.empty()) throw ValidationError("chat request needs at least one message");
  if (max_tokens < 1) throw ValidationError("chat request max_tokens must be >= 1");
  if (!(temperature >= 0.0)) throw ValidationError("chat request temperature must be >= 0");
  if (model_id.empty()) throw ValidationError("chat request needs a model_id");
}

nlohmann::json ChatRequest::canonical() const {
  nlohmann::json j;
  j["model_id"] = model_id;
  j["system"] = system ? nlohmann::json(*system) : nlohmann::json(nullptr);
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  j["messages"] = std::move(msgs);
  j["max_tokens"] = max_tokens;
  j["temperature"] = temperature;
  j["stop"] = stop ? nlohmann::json(*stop) : nlohmann::json(nullptr);
  return j;
}

ChatRequest ChatRequest::single(std::string model_id, std::string user, std::optional<std::string> system,
                                int max_tokens) {
  ChatRequest r;
  r.model_id = std::move(model_id);
  r.system = std::move(system);
  r.messages.push_back({"user", std::move(user)});
  r.max_tokens = max_tokens;
  return r;
}

const char* to_string(FinishReason r) {
  switch (r) {
    case FinishReason::Stop: return "stop";
    case FinishReason::Length: return "length";
    case FinishReason::Error: return "error";
  }
  return "error";
}

FinishReason finish_reason_from_string(const std::string& s) {
  if (s == "stop" || s == "end_turn" || s == "stop_sequence") return FinishReason::Stop;
  if (s == "length" || s == "max_tokens") return FinishReason::Length;
  return FinishReason::Error;
}

nlohmann::json ChatResponse::payload() const {
  return {{"text", text},
          {"finish_reason", to_string(finish_reason)},
          {"usage", {{"prompt_tokens", usage.prompt_tokens}, {"completion_tokens", usage.completion_tokens}}}};
}

ChatResponse ChatResponse::from_payload(const nlohmann::json& j) {
  ChatResponse r;
  r.text = j.at("text").get<std::string>();
  r.finish_reason = finish_reason_from_string(j.value("finish_reason", "stop"));
  if (j.contains("usage")) {
    r.usage.prompt_tokens = j.at("usage").value("prompt_tokens", 0);
    r.usage.completion_tokens = j.at("usage").value("completion_tokens", 0);
  }
  return r;
}

const char* to_string(ProviderFailure f) {
  switch (f) {
    case ProviderFailure::Transport: return "transport";
    case ProviderFailure::RateLimited: return "rate-limited";
    case ProviderFailure::Server: return "server";
    case ProviderFailure::ContextOverflow: return "context-overflow";
    case ProviderFailure::BadResponse: return "bad-response";
    case ProviderFailure::CacheMiss: return "cache-miss";
  }
  return "unknown";
}

}  // namespace digesttab::gateway
