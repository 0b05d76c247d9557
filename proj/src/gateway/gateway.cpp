#include "digesttab/gateway/gateway.hpp"

#include <cmath>
#include <fstream>
#include <thread>

#include "digesttab/core/corpus_json.hpp"
#include "digesttab/core/hash.hpp"

namespace fs = std::filesystem;

namespace digesttab::gateway {

namespace {

std::string path_safe(std::string s) {
  for (char& c : s) {
    if (c == '/' || c == '\\' || c == ':' || c == ' ') c = '_';
  }
  return s.empty() ? std::string("_") : s;
}

std::optional<nlohmann::json> read_json_if_exists(const fs::path& p) {
  std::error_code ec;
  if (!fs::exists(p, ec)) return std::nullopt;
  try {
    return nlohmann::json::parse(read_file(p));
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;  // torn or foreign file; treat as a miss
  }
}

}  // namespace

RateLimiter::RateLimiter(double rate_per_second, double burst, Sleeper sleeper)
    : rate_(rate_per_second),
      burst_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      last_(std::chrono::steady_clock::now()),
      sleeper_(std::move(sleeper)) {}

void RateLimiter::acquire() {
  if (rate_ <= 0) return;
  for (;;) {
    std::chrono::milliseconds wait{0};
    {
      std::lock_guard lock(mu_);
      auto now = std::chrono::steady_clock::now();
      std::chrono::duration<double> elapsed = now - last_;
      last_ = now;
      tokens_ = std::min(burst_, tokens_ + elapsed.count() * rate_);
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::milliseconds(static_cast<long>(std::ceil((1.0 - tokens_) / rate_ * 1000.0)));
    }
    if (sleeper_) {
      sleeper_(wait);
    } else {
      std::this_thread::sleep_for(wait);
    }
  }
}

Gateway::Gateway(GatewayOptions options, std::shared_ptr<ChatProvider> chat, std::shared_ptr<EmbedProvider> embed)
    : options_(std::move(options)),
      chat_(std::move(chat)),
      embed_(std::move(embed)),
      in_flight_(std::clamp(options_.max_in_flight, 1, 1024)),
      limiter_(options_.rate_per_second, options_.rate_burst, options_.sleeper) {
  if (chat_) options_.chat_provider_name = chat_->name();
  if (embed_) options_.embed_provider_name = embed_->name();
}

void Gateway::sleep_for(std::chrono::milliseconds d) const {
  if (options_.sleeper) {
    options_.sleeper(d);
  } else {
    std::this_thread::sleep_for(d);
  }
}

template <typename Fn>
auto Gateway::with_retries(Fn&& fn) -> decltype(fn()) {
  const int attempts = 1 + std::max(0, options_.transport_retries);
  for (int attempt = 0;; ++attempt) {
    try {
      limiter_.acquire();
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      return fn();
    } catch (const ProviderError& e) {
      if (!e.retryable() || attempt + 1 >= attempts) throw;
    } catch (const TimeoutError&) {
      if (attempt + 1 >= attempts) throw;
    }
    sleep_for(options_.backoff_base * (1 << attempt));
  }
}

std::string Gateway::chat_digest(const ChatRequest& request) const {
  nlohmann::json key = {{"provider", options_.chat_provider_name},
                        {"model_id", request.model_id},
                        {"request", request.canonical()}};
  return sha256_hex(key.dump());
}

std::string Gateway::embed_digest(const std::string& text) const {
  nlohmann::json key = {{"provider", options_.embed_provider_name},
                        {"model_id", options_.embed_model_id},
                        {"embed", text}};
  return sha256_hex(key.dump());
}

fs::path Gateway::chat_cache_path(const std::string& model_id, const std::string& digest) const {
  return *options_.cache_dir / path_safe(options_.chat_provider_name) / path_safe(model_id) / (digest + ".json");
}

fs::path Gateway::embed_cache_path(const std::string& digest) const {
  return *options_.cache_dir / path_safe(options_.embed_provider_name) / path_safe(options_.embed_model_id) /
         (digest + ".json");
}

void Gateway::note_digest(const std::string& digest) {
  std::lock_guard lock(mu_);
  if (digest_set_.insert(digest).second) digests_.push_back(digest);
}

ChatResponse Gateway::chat(const ChatRequest& request) {
  request.validate();
  const std::string digest = chat_digest(request);
  note_digest(digest);
  {
    std::lock_guard lock(mu_);
    if (auto it = chat_memo_.find(digest); it != chat_memo_.end()) {
      ++chat_hits_;
      ChatResponse r = it->second;
      r.from_cache = true;
      return r;
    }
  }
  if (options_.cache_dir) {
    if (auto stored = read_json_if_exists(chat_cache_path(request.model_id, digest))) {
      ChatResponse r = ChatResponse::from_payload(stored->at("response"));
      r.digest = digest;
      {
        std::lock_guard lock(mu_);
        chat_memo_.emplace(digest, r);
      }
      ++chat_hits_;
      r.from_cache = true;
      return r;
    }
  }
  if (!chat_) {
    throw ProviderError(ProviderFailure::CacheMiss,
                        "no chat provider attached and request " + digest.substr(0, 12) + " is not cached");
  }
  ChatResponse r = with_retries([&] {
    ++chat_calls_;
    return chat_->complete(request);
  });
  r.digest = digest;
  r.from_cache = false;
  if (r.finish_reason != FinishReason::Error) {
    if (options_.cache_dir) {
      nlohmann::json record = {{"provider", options_.chat_provider_name},
                               {"model_id", request.model_id},
                               {"request", request.canonical()},
                               {"response", r.payload()}};
      write_file_atomic(chat_cache_path(request.model_id, digest), record.dump(2) + "\n");
    }
    std::lock_guard lock(mu_);
    chat_memo_.emplace(digest, r);
  }
  return r;
}

std::vector<Vector> Gateway::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw PreconditionError("embed: text list must be non-empty");
  for (const auto& t : texts) {
    if (t.empty()) throw PreconditionError("embed: every text must be non-empty");
  }
  std::vector<Vector> out(texts.size());
  std::vector<std::size_t> missing;
  std::vector<std::string> digests(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    digests[i] = embed_digest(texts[i]);
    {
      std::lock_guard lock(mu_);
      if (auto it = embed_memo_.find(digests[i]); it != embed_memo_.end()) {
        out[i] = it->second;
        ++embed_hits_;
        continue;
      }
    }
    if (options_.cache_dir) {
      if (auto stored = read_json_if_exists(embed_cache_path(digests[i]))) {
        out[i] = stored->at("response").at("vector").get<Vector>();
        std::lock_guard lock(mu_);
        embed_memo_.emplace(digests[i], out[i]);
        ++embed_hits_;
        continue;
      }
    }
    missing.push_back(i);
  }
  if (missing.empty()) return out;
  if (!embed_) {
    throw ProviderError(ProviderFailure::CacheMiss,
                        "no embedding provider attached and " + std::to_string(missing.size()) + " texts are not cached");
  }
  // Deduplicate so each distinct text is sent once.
  std::vector<std::string> batch;
  std::map<std::string, std::size_t> slot;
  for (auto i : missing) {
    if (slot.emplace(texts[i], batch.size()).second) batch.push_back(texts[i]);
  }
  auto vectors = with_retries([&] {
    ++embed_calls_;
    return embed_->embed(options_.embed_model_id, batch);
  });
  if (vectors.size() != batch.size()) {
    throw ProviderError(ProviderFailure::BadResponse, "embedding provider returned a wrong number of vectors");
  }
  for (auto i : missing) {
    out[i] = vectors[slot.at(texts[i])];
    if (options_.cache_dir) {
      nlohmann::json record = {{"provider", options_.embed_provider_name},
                               {"model_id", options_.embed_model_id},
                               {"request", {{"embed", texts[i]}}},
                               {"response", {{"vector", out[i]}}}};
      write_file_atomic(embed_cache_path(digests[i]), record.dump() + "\n");
    }
    std::lock_guard lock(mu_);
    embed_memo_.emplace(digests[i], out[i]);
  }
  return out;
}

GatewayStats Gateway::stats() const {
  return {chat_calls_.load(), chat_hits_.load(), embed_calls_.load(), embed_hits_.load()};
}

std::vector<std::string> Gateway::digests_used() const {
  std::lock_guard lock(mu_);
  return digests_;
}

}  // namespace digesttab::gateway
