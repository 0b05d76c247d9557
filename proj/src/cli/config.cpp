#include "digesttab/cli/config.hpp"

#include <cstdlib>
#include <set>

#include "digesttab/core/error.hpp"
#include "digesttab/core/hash.hpp"

namespace digesttab::cli {

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

std::string interpolate_env(const std::string& text, const EnvLookup& env) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '$') {
      out += text[i];
      continue;
    }
    if (i + 1 < text.size() && text[i + 1] == '$') {
      out += '$';
      ++i;
      continue;
    }
    if (i + 1 >= text.size() || text[i + 1] != '{') {
      out += '$';
      continue;
    }
    auto close = text.find('}', i + 2);
    if (close == std::string::npos) throw ValidationError("unterminated ${ in config value: " + text);
    std::string body = text.substr(i + 2, close - i - 2);
    std::optional<std::string> fallback;
    if (auto d = body.find(":-"); d != std::string::npos) {
      fallback = body.substr(d + 2);
      body = body.substr(0, d);
    }
    if (body.empty()) throw ValidationError("empty variable name in config value: " + text);
    auto v = env(body);
    if (v && !v->empty()) out += *v;
    else if (fallback) out += *fallback;
    i = close;
  }
  return out;
}

void RunConfig::validate() const {
  alignment.validate();
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (retry_budget < 0) throw ValidationError("retry_budget must be >= 0");
  if (retry_variants > 4) throw ValidationError("retry_variants must lie in [0,4]");
  if (workers < 1) throw ValidationError("workers must be >= 1");
  if (max_in_flight < 1) throw ValidationError("max_in_flight must be >= 1");
  if (bootstrap_iterations < 1) throw ValidationError("bootstrap iterations must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ValidationError("bootstrap confidence must lie in (0,1)");
  for (const auto* p : {&chat, &embed}) {
    const char* which = p == &chat ? "chat" : "embed";
    if (p->kind != "openai" && p->kind != "replay" && p->kind != "hash") {
      throw ValidationError(std::string("providers.") + which + ".kind must be openai, replay or hash");
    }
    if (p->kind == "openai" && p->base_url.empty()) {
      throw ValidationError(std::string("providers.") + which + ".base_url is required for kind openai");
    }
    if (p->name.empty()) throw ValidationError(std::string("providers.") + which + ".name must not be empty");
  }
  if (chat.kind == "hash") throw ValidationError("providers.chat.kind hash is only available for embeddings");
  if (embed.kind == "hash" && embed.dim < 1) throw ValidationError("providers.embed.dim must be >= 1");
  if (resolver_kind != "none" && resolver_kind != "semantic-scholar") {
    throw ValidationError("resolver.kind must be none or semantic-scholar");
  }
}

namespace {

std::string secret(const std::string& s, bool include) {
  if (include || s.empty()) return s;
  return "<redacted>";
}

ojson provider_json(const ProviderConfig& p, bool include_secrets) {
  ojson j{{"kind", p.kind}, {"name", p.name}, {"base_url", p.base_url},
          {"api_key", secret(p.api_key, include_secrets)}, {"timeout_s", p.timeout_s}};
  if (p.kind == "hash") {
    j["dim"] = p.dim;
    j["seed"] = p.seed;
  }
  return j;
}

}  // namespace

ojson RunConfig::to_json(bool include_secrets) const {
  ojson j;
  j["providers"] = {{"chat", provider_json(chat, include_secrets)}, {"embed", provider_json(embed, include_secrets)}};
  j["models"] = {{"schema", schema_model},   {"query", query_model},         {"value", value_model},
                 {"rewrite", rewrite_model}, {"decontext", decontext_model}, {"aligner", aligner_model},
                 {"embed", embed_model}};
  j["cache_dir"] = cache_dir ? ojson(cache_dir->string()) : ojson(nullptr);
  j["generation"] = {{"batch_size", batch_size},
                     {"retry_budget", retry_budget},
                     {"retry_variants", retry_variants},
                     {"workers", workers},
                     {"max_in_flight", max_in_flight},
                     {"rate_per_second", rate_per_second}};
  j["alignment"] = {{"featurizer", align::to_string(alignment.featurizer)},
                    {"scorer", align::to_string(alignment.scorer)},
                    {"threshold", alignment.threshold}};
  j["bootstrap"] = {{"iterations", bootstrap_iterations}, {"confidence", confidence}};
  j["seed"] = seed;
  j["resolver"] = {{"kind", resolver_kind},
                   {"base_url", resolver_base_url},
                   {"api_key", secret(resolver_api_key, include_secrets)}};
  return j;
}

std::string RunConfig::hash() const { return sha256_hex(to_json(false).dump()); }

RunConfig default_config(const EnvLookup& env) {
  RunConfig c;
  if (auto v = env("DIGESTTAB_CHAT_API_KEY")) c.chat.api_key = *v;
  if (auto v = env("DIGESTTAB_EMBED_API_KEY")) c.embed.api_key = *v;
  if (auto v = env("DIGESTTAB_S2_API_KEY")) c.resolver_api_key = *v;
  if (auto v = env("DIGESTTAB_CACHE_DIR"); v && !v->empty()) c.cache_dir = *v;
  return c;
}

namespace {

/// Walks one JSON object, handing out typed fields and rejecting unknown keys.
class Section {
 public:
  Section(const ojson& j, std::string path, const EnvLookup& env) : j_(j), path_(std::move(path)), env_(env) {
    if (!j_.is_object()) throw ValidationError(where() + " must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw ValidationError("unknown config key " + path_ + (path_.empty() ? "" : ".") + k);
    }
  }

  const ojson* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  void str(const std::string& key, std::string& out) {
    if (auto* v = get(key)) {
      if (!v->is_string()) throw ValidationError(at(key) + " must be a string");
      out = interpolate_env(v->get<std::string>(), env_);
    }
  }

  template <typename T>
  void num(const std::string& key, T& out) {
    if (auto* v = get(key)) {
      if (v->is_string()) {
        // interpolated numbers, e.g. "${WORKERS:-4}"
        auto s = interpolate_env(v->get<std::string>(), env_);
        try {
          out = static_cast<T>(std::stod(s));
        } catch (const std::exception&) {
          throw ValidationError(at(key) + " must be a number, got '" + s + "'");
        }
        return;
      }
      if (!v->is_number()) throw ValidationError(at(key) + " must be a number");
      if constexpr (std::is_unsigned_v<T>) {
        if (v->is_number_integer() && v->get<long long>() < 0) throw ValidationError(at(key) + " must be >= 0");
      }
      out = v->get<T>();
    }
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "config" : path_; }

 private:
  const ojson& j_;
  std::string path_;
  const EnvLookup& env_;
  std::set<std::string> seen_;
};

void read_provider(Section& parent, const std::string& key, ProviderConfig& p, const EnvLookup& env) {
  auto* v = parent.get(key);
  if (!v) return;
  Section s(*v, parent.at(key), env);
  s.str("kind", p.kind);
  s.str("name", p.name);
  s.str("base_url", p.base_url);
  s.str("api_key", p.api_key);
  s.num("timeout_s", p.timeout_s);
  s.num("dim", p.dim);
  s.num("seed", p.seed);
}

}  // namespace

RunConfig parse_config(const std::string& text, const EnvLookup& env) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c = default_config(env);
  try {
    Section root(j, "", env);
    if (auto* v = root.get("providers")) {
      Section s(*v, "providers", env);
      read_provider(s, "chat", c.chat, env);
      read_provider(s, "embed", c.embed, env);
    }
    if (auto* v = root.get("models")) {
      Section s(*v, "models", env);
      s.str("schema", c.schema_model);
      s.str("query", c.query_model);
      s.str("value", c.value_model);
      s.str("rewrite", c.rewrite_model);
      s.str("decontext", c.decontext_model);
      s.str("aligner", c.aligner_model);
      s.str("embed", c.embed_model);
    }
    if (root.get("cache_dir")) {
      std::string dir;
      root.str("cache_dir", dir);
      if (!dir.empty()) c.cache_dir = dir;
    }
    if (auto* v = root.get("generation")) {
      Section s(*v, "generation", env);
      s.num("batch_size", c.batch_size);
      s.num("retry_budget", c.retry_budget);
      s.num("retry_variants", c.retry_variants);
      s.num("workers", c.workers);
      s.num("max_in_flight", c.max_in_flight);
      s.num("rate_per_second", c.rate_per_second);
    }
    if (auto* v = root.get("alignment")) {
      Section s(*v, "alignment", env);
      std::string f, g;
      s.str("featurizer", f);
      s.str("scorer", g);
      if (!f.empty()) c.alignment.featurizer = align::featurizer_from_string(f);
      if (!g.empty()) c.alignment.scorer = align::scorer_from_string(g);
      s.num("threshold", c.alignment.threshold);
    }
    if (auto* v = root.get("bootstrap")) {
      Section s(*v, "bootstrap", env);
      s.num("iterations", c.bootstrap_iterations);
      s.num("confidence", c.confidence);
    }
    root.num("seed", c.seed);
    if (auto* v = root.get("resolver")) {
      Section s(*v, "resolver", env);
      s.str("kind", c.resolver_kind);
      s.str("base_url", c.resolver_base_url);
      s.str("api_key", c.resolver_api_key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path, const EnvLookup& env) {
  if (!std::filesystem::exists(path)) throw IoError("config file not found: " + path.string());
  return parse_config(read_file(path), env);
}

}  // namespace digesttab::cli
