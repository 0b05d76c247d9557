#pragma once

// Deterministic chat stub that understands every generation prompt well enough
// to answer it, plus helpers to read its call log.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <memory>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "digesttab/core/model.hpp"
#include "digesttab/gateway/gateway.hpp"
#include "digesttab/gateway/stub_providers.hpp"

namespace digesttab::testkit {

enum class PromptKind { Joint, Schema, Caption, Describe, Question, Value, Rewrite, Decontext, Other };

inline PromptKind classify_prompt(const std::string& p) {
  if (p.rfind("We would like you to build a table", 0) == 0) return PromptKind::Joint;
  if (p.rfind("Imagine the following scenario", 0) == 0) return PromptKind::Schema;
  if (p.find("could serve as the caption of that table") != std::string::npos) return PromptKind::Caption;
  if (p.rfind("\nA user is making a table", 0) == 0) return PromptKind::Describe;
  if (p.find("Rewrite this description as a one-line question.") != std::string::npos) return PromptKind::Question;
  if (p.rfind("Answer a question using the provided scientific paper.", 0) == 0) return PromptKind::Value;
  if (p.rfind("The JSON list below holds", 0) == 0) return PromptKind::Rewrite;
  if (p.rfind("A table comparing scientific papers has a column named", 0) == 0) return PromptKind::Decontext;
  return PromptKind::Other;
}

inline std::string first_match(const std::string& s, const std::string& re) {
  std::smatch m;
  if (std::regex_search(s, m, std::regex(re))) return m[1];
  return "";
}

/// The question a value prompt asks.
inline std::string value_question(const std::string& p) {
  auto start = p.rfind("please answer the question: \"");
  if (start == std::string::npos) return "";
  start += 29;
  auto end = p.find("\".", start);
  return p.substr(start, end - start);
}

/// Papers carry "PAPERTAG:<id>" at the top of their full text.
inline std::string value_paper(const std::string& p) { return first_match(p, R"(PAPERTAG:(\S+))"); }

inline PaperRecord stub_paper(const std::string& id, bool with_full_text = true) {
  PaperRecord p{id, std::nullopt, "Title of " + id, "Abstract of " + id + ".", std::nullopt};
  if (with_full_text) p.full_text = "PAPERTAG:" + id + "\nIntroduction\nWe study things in " + id + ".\n";
  return p;
}

inline std::vector<PaperRecord> stub_papers(std::size_t n, bool with_full_text = true) {
  std::vector<PaperRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "p%02zu", i);
    out.push_back(stub_paper(buf, with_full_text));
  }
  return out;
}

struct GenStubConfig {
  /// Extra aspects returned beyond the requested count (joint and schema).
  int aspect_surplus = 0;
  /// Decides, per (paper, question), whether a value prompt gets an answer or "{}".
  std::function<bool(const std::string& paper, const std::string& question)> answers =
      [](const std::string&, const std::string&) { return true; };
  bool rewrite_fails = false;
  bool value_malformed = false;
};

inline std::string stub_respond(const gateway::ChatRequest& req, const GenStubConfig& cfg) {
  const std::string& p = req.messages.back().content;
  switch (classify_prompt(p)) {
    case PromptKind::Joint: {
      int k = std::stoi(first_match(p, R"(Make (\d+) dimensions)")) + cfg.aspect_surplus;
      int n = std::stoi(first_match(p, R"(should also have (\d+) papers)"));
      auto tag = first_match(p, R"(Title: Title of (\S+))");
      nlohmann::ordered_json j;
      for (int i = 1; i <= n; ++i) {
        nlohmann::ordered_json row;
        for (int a = 1; a <= k; ++a) row["Dim " + std::to_string(a) + " of " + tag] = "v" + std::to_string(i) + "." + std::to_string(a);
        j["Paper " + std::to_string(i)] = row;
      }
      return "Here is the table:\n```json\n" + j.dump(2) + "\n```";
    }
    case PromptKind::Schema: {
      auto num = first_match(p, R"(identify (\d+) (?:table columns|attributes))");
      int k = std::stoi(num) + cfg.aspect_surplus;
      auto tag = first_match(p, R"(Title: Title of (\S+))");
      nlohmann::json names = nlohmann::json::array();
      for (int a = 1; a <= k; ++a) names.push_back("Aspect " + std::to_string(a) + " of " + tag);
      if (p.find("Python list") != std::string::npos) {
        return "[\"shared topic\"]\n```json\n{\"shared topic\": " + names.dump() + "}\n```";
      }
      return "```List\n" + names.dump() + "\n```";
    }
    case PromptKind::Caption: {
      std::string titles;
      std::regex re(R"(Title: ([^\n]+))");
      for (std::sregex_iterator it(p.begin(), p.end(), re), end; it != end; ++it) titles += (*it)[1].str() + "; ";
      return "A comparison of " + titles;
    }
    case PromptKind::Describe:
      return "The " + first_match(p, R"(column called (.+?)\. Please)") + " of each paper.";
    case PromptKind::Question:
      return "What is " + first_match(p, R"(^The (.+?) of each paper\.)") + "?";
    case PromptKind::Value: {
      if (cfg.value_malformed) return "I cannot answer in JSON.";
      auto paper = value_paper(p);
      auto q = value_question(p);
      if (!cfg.answers(paper, q)) return "{}";
      nlohmann::json j;
      j["answer"] = "The paper reports [" + paper + " | " + q + "]";
      j["excerpts"] = {"We study things in " + paper + "."};
      return j.dump();
    }
    case PromptKind::Rewrite: {
      if (cfg.rewrite_fails) return "sorry";
      auto start = p.find("\n\n[");
      auto end = p.find("]\n\nReturn a JSON list");
      auto vals = nlohmann::json::parse(p.substr(start + 2, end - start - 1));
      nlohmann::json out = nlohmann::json::array();
      for (auto& v : vals) {
        auto s = v.get<std::string>();
        const std::string prefix = "The paper reports ";
        out.push_back(s.rfind(prefix, 0) == 0 ? s.substr(prefix.size()) : s);
      }
      return out.dump();
    }
    case PromptKind::Decontext:
      return "This column records the " + first_match(p, R"(column named \"(.+?)\")") + " of each paper.";
    case PromptKind::Other: break;
  }
  return "unrecognized prompt";
}

struct GenStack {
  std::shared_ptr<gateway::ScriptedChatProvider> provider;
  std::unique_ptr<gateway::Gateway> gateway;

  std::vector<std::string> prompts_of(PromptKind kind) const {
    std::vector<std::string> out;
    for (const auto& c : provider->calls()) {
      if (classify_prompt(c.messages.back().content) == kind) out.push_back(c.messages.back().content);
    }
    return out;
  }
};

inline GenStack make_gen_stack(GenStubConfig cfg = {}, std::optional<std::filesystem::path> cache_dir = {}) {
  GenStack s;
  s.provider = std::make_shared<gateway::ScriptedChatProvider>(
      [cfg](const gateway::ChatRequest& r) { return stub_respond(r, cfg); }, "gen-stub");
  gateway::GatewayOptions o;
  o.chat_provider_name = "gen-stub";
  o.cache_dir = std::move(cache_dir);
  o.backoff_base = std::chrono::milliseconds(0);
  s.gateway = std::make_unique<gateway::Gateway>(o, s.provider, nullptr);
  return s;
}

}  // namespace digesttab::testkit
