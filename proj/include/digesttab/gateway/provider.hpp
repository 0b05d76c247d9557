#pragma once

#include <string>
#include <vector>

#include "digesttab/gateway/types.hpp"

namespace digesttab::gateway {

using Vector = std::vector<float>;

/// A chat-completion backend. Implementations must be callable from any thread.
class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual std::string name() const = 0;
  /// Throws ProviderError / TimeoutError / AuthError.
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

/// An embedding backend; one vector per input text, fixed dimension per model.
class EmbedProvider {
 public:
  virtual ~EmbedProvider() = default;
  virtual std::string name() const = 0;
  virtual std::vector<Vector> embed(const std::string& model_id, const std::vector<std::string>& texts) = 0;
};

}  // namespace digesttab::gateway
