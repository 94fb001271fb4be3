#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cupl {

enum class ErrorCode {
  // catalog
  MalformedTemplate,
  MissingTypeHint,
  CatalogParseError,
  UnknownMode,
  UnknownDataset,
  // llm gateway
  AuthError,
  RateLimited,
  TransportError,
  MalformedResponse,
  CacheCorrupt,
  // embeddings / prototypes
  ZeroVector,
  DimMismatch,
  MissingKey,
  ParseError,
  EmptyInput,
  EmptyClass,
  ClassMismatch,
  // evaluation
  MissingPrediction,
  EmptyManifest,
  DatasetMismatch,
  // ablations
  ProvenanceMissing,
  ValueExceedsAvailable,
  MissingRun,
  // general
  InvalidArgument,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Broad failure class, used by the CLI to pick an exit code.
enum class ErrorCategory { Config, Upstream, Io };

ErrorCategory category_of(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

}  // namespace cupl
