#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "digesttab/align/align.hpp"
#include "digesttab/core/corpus_json.hpp"

namespace digesttab::cli {

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the process environment.
EnvLookup process_env();

/// Replaces ${VAR} and ${VAR:-default}. An unset variable without a default becomes "".
/// "$$" escapes a literal dollar sign.
std::string interpolate_env(const std::string& text, const EnvLookup& env);

struct ProviderConfig {
  /// "openai" (HTTP, OpenAI-compatible), "replay" (cache only), or "hash" (embeddings only, offline).
  std::string kind = "replay";
  /// Recorded in cache keys; a replay provider must use the name the cache was recorded under.
  std::string name = "openai";
  std::string base_url;
  std::string api_key;
  int timeout_s = 120;
  std::size_t dim = 384;     // hash embedder
  std::uint64_t seed = 0;    // hash embedder
};

struct RunConfig {
  ProviderConfig chat;
  ProviderConfig embed;
  std::string schema_model = "gpt-4-turbo";
  std::string query_model = "gpt-4-turbo";
  std::string value_model = "gpt-4-turbo";
  std::string rewrite_model = "gpt-3.5-turbo";
  std::string decontext_model = "mistralai/Mixtral-8x7B-Instruct-v0.1";
  std::string aligner_model = "meta-llama/Meta-Llama-3-70B-Instruct";
  std::string embed_model = "sentence-transformers/all-mpnet-base-v2";
  std::optional<std::filesystem::path> cache_dir;

  std::size_t batch_size = 20;
  int retry_budget = 5;
  std::size_t retry_variants = 4;
  std::size_t workers = 4;
  int max_in_flight = 4;
  double rate_per_second = 0.0;

  align::AlignmentConfig alignment;

  std::uint64_t seed = 0;
  std::size_t bootstrap_iterations = 1000;
  double confidence = 0.95;

  std::string resolver_kind = "none";  // "none" or "semantic-scholar"
  std::string resolver_base_url = "https://api.semanticscholar.org/graph/v1";
  std::string resolver_api_key;

  /// Throws ValidationError naming the violated invariant.
  void validate() const;

  /// Secrets are replaced by "<redacted>" (or "" when unset) unless `include_secrets`.
  ojson to_json(bool include_secrets = false) const;

  /// SHA-256 of the redacted canonical JSON.
  std::string hash() const;
};

/// Built-in defaults with DIGESTTAB_CHAT_API_KEY, DIGESTTAB_EMBED_API_KEY,
/// DIGESTTAB_S2_API_KEY and DIGESTTAB_CACHE_DIR applied.
RunConfig default_config(const EnvLookup& env);

/// Defaults overlaid with a JSON config document. Every string value is interpolated
/// before use. Unknown keys and wrong types raise ValidationError.
RunConfig parse_config(const std::string& text, const EnvLookup& env);
RunConfig load_config(const std::filesystem::path& path, const EnvLookup& env);

}  // namespace digesttab::cli
