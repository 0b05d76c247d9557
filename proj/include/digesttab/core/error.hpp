#pragma once

#include <stdexcept>
#include <string>

namespace digesttab {

enum class ErrorKind {
  Usage,
  Validation,
  Precondition,
  Io,
  MalformedXml,
  ParseFailure,
  SchemaMismatch,
  ResolverUnavailable,
  Provider,
  Timeout,
  Auth,
  GenerationFailed,
  MalformedJson,
  EmptyCorpus,
  EmbedderUnavailable,
  MissingAlignment,
  TooFewSamples,
};

const char* to_string(ErrorKind kind);

/// Process exit status for an error surfaced by the CLI
/// (0 success, 1 usage, 2 validation, 3 provider, 4 generation-failed).
int exit_code_for(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& m) : Error(ErrorKind::Validation, m) {}
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& m) : Error(ErrorKind::Precondition, m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error(ErrorKind::Io, m) {}
};

class GenerationFailed : public Error {
 public:
  explicit GenerationFailed(const std::string& m) : Error(ErrorKind::GenerationFailed, m) {}
};

class MalformedJson : public Error {
 public:
  explicit MalformedJson(const std::string& m) : Error(ErrorKind::MalformedJson, m) {}
};

}  // namespace digesttab
