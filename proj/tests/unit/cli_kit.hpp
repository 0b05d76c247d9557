#pragma once

// Helpers for driving the CLI in-process against the generation stub.

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "digesttab/cli/cli.hpp"
#include "gen_stub.hpp"

namespace digesttab::testkit {

/// Reference tables whose papers carry stub full texts ("PAPERTAG:t0p00", ...).
inline std::vector<ReviewTable> stub_reference_corpus(std::size_t n_tables, std::size_t rows = 3) {
  std::vector<ReviewTable> out;
  for (std::size_t t = 0; t < n_tables; ++t) {
    ReviewTable ref;
    ref.table_id = "ref_" + std::to_string(t);
    ref.caption = "Comparison of systems, part " + std::to_string(t);
    ref.in_text_refs = {{"Related work", "Table " + std::to_string(t + 1) + " compares prior systems."}};
    ref.aspects = {"Task", "Dataset", "Size"};
    for (std::size_t r = 0; r < rows; ++r) {
      char id[48];
      std::snprintf(id, sizeof id, "t%zup%02zu", t, r);
      auto p = stub_paper(id);
      ref.row_keys.push_back(id);
      ref.papers.push_back(p);
      ref.set_cell(id, "Task", CellValue::of(r % 2 ? "summarization" : "question answering"));
      ref.set_cell(id, "Dataset", CellValue::of(std::string("corpus ") + id));
      ref.set_cell(id, "Size", CellValue::of(r == 0 ? "" : std::to_string(10 * (r + 1)) + "K"));
    }
    out.push_back(std::move(ref));
  }
  return out;
}

/// Config with replay chat under the stub's provider name and the given embedding provider kind.
inline std::string stub_config_json(const std::filesystem::path& cache_dir, const std::string& embed_kind = "replay") {
  nlohmann::ordered_json j;
  j["providers"] = {{"chat", {{"kind", "replay"}, {"name", "gen-stub"}}},
                    {"embed", {{"kind", embed_kind}, {"name", "hash-embedder"}, {"dim", 32}, {"seed", 7}}}};
  j["models"] = {{"embed", "hash-32"}};
  j["cache_dir"] = cache_dir.string();
  j["generation"] = {{"workers", 3}};
  return j.dump(2);
}

inline cli::Injected stub_providers(GenStubConfig cfg = {}) {
  cli::Injected in;
  in.chat = std::make_shared<gateway::ScriptedChatProvider>(
      [cfg](const gateway::ChatRequest& r) { return stub_respond(r, cfg); }, "gen-stub");
  return in;
}

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliResult invoke(const std::vector<std::string>& args, const cli::Injected& injected = {}) {
  std::ostringstream out, err;
  auto no_env = [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
  int code = cli::run(args, out, err, injected, no_env);
  return {code, out.str(), err.str()};
}

}  // namespace digesttab::testkit
