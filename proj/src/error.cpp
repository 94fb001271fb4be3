#include "cupl/error.hpp"

namespace cupl {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedTemplate: return "MalformedTemplate";
    case ErrorCode::MissingTypeHint: return "MissingTypeHint";
    case ErrorCode::CatalogParseError: return "CatalogParseError";
    case ErrorCode::UnknownMode: return "UnknownMode";
    case ErrorCode::UnknownDataset: return "UnknownDataset";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::CacheCorrupt: return "CacheCorrupt";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::MissingKey: return "MissingKey";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::ClassMismatch: return "ClassMismatch";
    case ErrorCode::MissingPrediction: return "MissingPrediction";
    case ErrorCode::EmptyManifest: return "EmptyManifest";
    case ErrorCode::DatasetMismatch: return "DatasetMismatch";
    case ErrorCode::ProvenanceMissing: return "ProvenanceMissing";
    case ErrorCode::ValueExceedsAvailable: return "ValueExceedsAvailable";
    case ErrorCode::MissingRun: return "MissingRun";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::AuthError:
    case ErrorCode::RateLimited:
    case ErrorCode::TransportError:
    case ErrorCode::MalformedResponse:
    case ErrorCode::CacheCorrupt:
    case ErrorCode::ZeroVector:
    case ErrorCode::DimMismatch:
    case ErrorCode::MissingKey:
    case ErrorCode::EmptyClass:
      return ErrorCategory::Upstream;
    case ErrorCode::IoError:
    case ErrorCode::ParseError:
      return ErrorCategory::Io;
    default:
      return ErrorCategory::Config;
  }
}

}  // namespace cupl
