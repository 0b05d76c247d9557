#include "digesttab/gateway/stub_providers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "digesttab/core/hash.hpp"

namespace digesttab::gateway {

ScriptedChatProvider::ScriptedChatProvider(Script script, std::string name, std::optional<std::size_t> context_chars)
    : script_(std::move(script)), name_(std::move(name)), context_chars_(context_chars) {}

ChatResponse ScriptedChatProvider::complete(const ChatRequest& request) {
  {
    std::lock_guard lock(mu_);
    calls_.push_back(request);
  }
  if (context_chars_) {
    std::size_t total = request.system ? request.system->size() : 0;
    for (const auto& m : request.messages) total += m.content.size();
    if (total > *context_chars_) {
      throw ProviderError(ProviderFailure::ContextOverflow,
                          "prompt of " + std::to_string(total) + " chars exceeds the stub context of " +
                              std::to_string(*context_chars_));
    }
  }
  ChatResponse r;
  r.text = script_(request);
  r.finish_reason = FinishReason::Stop;
  r.usage.completion_tokens = static_cast<int>(r.text.size() / 4);
  return r;
}

std::vector<ChatRequest> ScriptedChatProvider::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t ScriptedChatProvider::call_count() const {
  std::lock_guard lock(mu_);
  return calls_.size();
}

EchoChatProvider::EchoChatProvider(std::optional<std::size_t> context_chars)
    : ScriptedChatProvider(
          [](const ChatRequest& r) {
            for (auto it = r.messages.rbegin(); it != r.messages.rend(); ++it) {
              if (it->role == "user") return it->content;
            }
            return std::string();
          },
          "echo", context_chars) {}

HashEmbedder::HashEmbedder(std::size_t dim, std::uint64_t seed, std::string name)
    : dim_(dim), seed_(seed), name_(std::move(name)) {}

Vector HashEmbedder::vector_for(const std::string& text) const {
  std::mt19937_64 rng(splitmix64(seed_ ^ fnv1a64(text)));
  auto uniform = [&] {
    // 53-bit mantissa in (0, 1]
    return (static_cast<double>(rng() >> 11) + 1.0) * (1.0 / 9007199254740992.0);
  };
  std::vector<double> v(dim_);
  for (std::size_t i = 0; i < dim_; i += 2) {
    double r = std::sqrt(-2.0 * std::log(uniform()));
    double theta = 2.0 * std::numbers::pi * uniform();
    v[i] = r * std::cos(theta);
    if (i + 1 < dim_) v[i + 1] = r * std::sin(theta);
  }
  double norm = 0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  Vector out(dim_);
  for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

std::vector<Vector> HashEmbedder::embed(const std::string&, const std::vector<std::string>& texts) {
  {
    std::lock_guard lock(mu_);
    ++calls_;
  }
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(vector_for(t));
  return out;
}

std::size_t HashEmbedder::call_count() const {
  std::lock_guard lock(mu_);
  return calls_;
}

TableEmbedder::TableEmbedder(std::vector<std::pair<std::string, Vector>> table, std::string name)
    : table_(std::move(table)), name_(std::move(name)) {}

std::vector<Vector> TableEmbedder::embed(const std::string&, const std::vector<std::string>& texts) {
  std::vector<Vector> out;
  for (const auto& t : texts) {
    auto it = std::find_if(table_.begin(), table_.end(), [&](const auto& e) { return e.first == t; });
    if (it == table_.end()) throw ProviderError(ProviderFailure::BadResponse, "no stub vector for '" + t + "'");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace digesttab::gateway
