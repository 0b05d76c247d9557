#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <set>
#include <string>
#include <vector>

#include "digesttab/gateway/provider.hpp"

namespace digesttab::gateway {

/// Token bucket shared by every caller of one gateway. rate <= 0 disables limiting.
class RateLimiter {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  RateLimiter(double rate_per_second, double burst, Sleeper sleeper = {});
  void acquire();

 private:
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  Sleeper sleeper_;
  std::mutex mu_;
};

struct GatewayOptions {
  /// Disk cache root; when unset only an in-memory cache is kept.
  std::optional<std::filesystem::path> cache_dir;
  /// Name recorded in cache keys and paths; also used in replay mode
  /// when no provider object is attached.
  std::string chat_provider_name = "none";
  std::string embed_provider_name = "none";
  std::string embed_model_id = "none";
  int transport_retries = 3;
  std::chrono::milliseconds backoff_base{250};
  int max_in_flight = 4;
  double rate_per_second = 0.0;
  double rate_burst = 1.0;
  /// Test hook; defaults to std::this_thread::sleep_for.
  RateLimiter::Sleeper sleeper;
};

struct GatewayStats {
  std::size_t chat_network_calls = 0;
  std::size_t chat_cache_hits = 0;
  std::size_t embed_network_calls = 0;
  std::size_t embed_cache_hits = 0;
};

/// Thread-safe facade over chat and embedding providers with a content-addressed
/// cache. A warm cache makes every call network free; with no provider attached
/// the gateway is replay-only and a miss raises ProviderError(CacheMiss).
class Gateway {
 public:
  Gateway(GatewayOptions options, std::shared_ptr<ChatProvider> chat, std::shared_ptr<EmbedProvider> embed);

  ChatResponse chat(const ChatRequest& request);

  /// One vector per text, cached per (model, text).
  std::vector<Vector> embed(const std::vector<std::string>& texts);

  /// Cache digest of a request (hex SHA-256 of provider, model and canonical request).
  std::string chat_digest(const ChatRequest& request) const;
  std::string embed_digest(const std::string& text) const;

  std::string chat_provider_name() const { return options_.chat_provider_name; }
  std::string embed_model_id() const { return options_.embed_model_id; }
  bool has_chat_provider() const { return chat_ != nullptr; }
  bool has_embed_provider() const { return embed_ != nullptr; }

  GatewayStats stats() const;

  /// Digests touched since construction, in first-use order.
  std::vector<std::string> digests_used() const;

 private:
  std::filesystem::path chat_cache_path(const std::string& model_id, const std::string& digest) const;
  std::filesystem::path embed_cache_path(const std::string& digest) const;
  void sleep_for(std::chrono::milliseconds d) const;
  void note_digest(const std::string& digest);

  template <typename Fn>
  auto with_retries(Fn&& fn) -> decltype(fn());

  GatewayOptions options_;
  std::shared_ptr<ChatProvider> chat_;
  std::shared_ptr<EmbedProvider> embed_;
  std::counting_semaphore<1024> in_flight_;
  RateLimiter limiter_;

  mutable std::mutex mu_;
  std::map<std::string, ChatResponse> chat_memo_;
  std::map<std::string, Vector> embed_memo_;
  std::vector<std::string> digests_;
  std::set<std::string> digest_set_;
  std::atomic<std::size_t> chat_calls_{0};
  std::atomic<std::size_t> chat_hits_{0};
  std::atomic<std::size_t> embed_calls_{0};
  std::atomic<std::size_t> embed_hits_{0};
};

}  // namespace digesttab::gateway
