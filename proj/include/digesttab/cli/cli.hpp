#pragma once

#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "digesttab/cli/config.hpp"
#include "digesttab/core/corpus_json.hpp"
#include "digesttab/gateway/provider.hpp"

namespace digesttab::cli {

/// Provider objects that take the place of the configured ones (names still come from the
/// config, so a cache recorded this way replays under the same keys).
struct Injected {
  std::shared_ptr<gateway::ChatProvider> chat;
  std::shared_ptr<gateway::EmbedProvider> embed;
};

/// Runs one subcommand. `args` excludes the program name. Returns the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Injected& injected = {},
        const EnvLookup& env = process_env());

/// Inverse of AlignmentResult::to_json.
align::AlignmentResult alignment_from_json(const ojson& j);

}  // namespace digesttab::cli
