#pragma once

#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "digesttab/gateway/provider.hpp"

namespace digesttab::gateway {

/// Deterministic local chat backend driven by a callback. Records every request;
/// optionally enforces a context limit (in characters) to exercise overflow handling.
class ScriptedChatProvider : public ChatProvider {
 public:
  using Script = std::function<std::string(const ChatRequest&)>;

  explicit ScriptedChatProvider(Script script, std::string name = "stub",
                                std::optional<std::size_t> context_chars = std::nullopt);

  std::string name() const override { return name_; }
  ChatResponse complete(const ChatRequest& request) override;

  std::vector<ChatRequest> calls() const;
  std::size_t call_count() const;

 private:
  Script script_;
  std::string name_;
  std::optional<std::size_t> context_chars_;
  mutable std::mutex mu_;
  std::vector<ChatRequest> calls_;
};

/// Responds with the content of the final user message.
class EchoChatProvider : public ScriptedChatProvider {
 public:
  explicit EchoChatProvider(std::optional<std::size_t> context_chars = std::nullopt);
};

/// Maps each text to a seeded pseudorandom unit vector: identical texts give
/// identical vectors, and the mapping is reproducible across runs and platforms.
class HashEmbedder : public EmbedProvider {
 public:
  explicit HashEmbedder(std::size_t dim = 64, std::uint64_t seed = 0, std::string name = "hash-embedder");

  std::string name() const override { return name_; }
  std::vector<Vector> embed(const std::string& model_id, const std::vector<std::string>& texts) override;

  /// The vector for one text (pure function of seed, dim and text).
  Vector vector_for(const std::string& text) const;

  std::size_t call_count() const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::string name_;
  mutable std::mutex mu_;
  std::size_t calls_ = 0;
};

/// Embedder backed by an explicit text -> vector table; unknown texts throw.
class TableEmbedder : public EmbedProvider {
 public:
  explicit TableEmbedder(std::vector<std::pair<std::string, Vector>> table, std::string name = "table-embedder");

  std::string name() const override { return name_; }
  std::vector<Vector> embed(const std::string& model_id, const std::vector<std::string>& texts) override;

 private:
  std::vector<std::pair<std::string, Vector>> table_;
  std::string name_;
};

}  // namespace digesttab::gateway
