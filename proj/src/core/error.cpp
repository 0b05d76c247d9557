#include "digesttab/core/error.hpp"

namespace digesttab {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Precondition: return "precondition-violation";
    case ErrorKind::Io: return "io";
    case ErrorKind::MalformedXml: return "malformed-xml";
    case ErrorKind::ParseFailure: return "parse-failure";
    case ErrorKind::SchemaMismatch: return "schema-mismatch";
    case ErrorKind::ResolverUnavailable: return "resolver-unavailable";
    case ErrorKind::Provider: return "provider-error";
    case ErrorKind::Timeout: return "timeout";
    case ErrorKind::Auth: return "auth-error";
    case ErrorKind::GenerationFailed: return "generation-failed";
    case ErrorKind::MalformedJson: return "malformed-json";
    case ErrorKind::EmptyCorpus: return "empty-corpus";
    case ErrorKind::EmbedderUnavailable: return "embedder-unavailable";
    case ErrorKind::MissingAlignment: return "missing-alignment";
    case ErrorKind::TooFewSamples: return "too-few-samples";
  }
  return "unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return 1;
    case ErrorKind::ResolverUnavailable:
    case ErrorKind::Provider:
    case ErrorKind::Timeout:
    case ErrorKind::Auth:
    case ErrorKind::EmbedderUnavailable:
      return 3;
    case ErrorKind::GenerationFailed:
    case ErrorKind::MalformedJson:
      return 4;
    default:
      return 2;
  }
}

}  // namespace digesttab
