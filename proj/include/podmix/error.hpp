#pragma once

#include <stdexcept>
#include <string>

namespace podmix {

enum class ErrorKind {
  kFormat,
  kUnsupportedEncoding,
  kIo,
  kBounds,
  kShape,
  kDomain,
  kParameter,
  kEmptyInput,
  kSilentSource,
  kNoSource,
  kOverlapUnavailable,
  kNoFragment,
  kAllSilent,
  kCannotPartition,
  kResolution,
  kSingularProjection,
  kAlignment,
  kUnsupportedEvaluation,
  kConfig,
  kNotFound,
  kValidation,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kUnsupportedEncoding: return "unsupported-encoding";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kBounds: return "bounds";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kParameter: return "parameter";
    case ErrorKind::kEmptyInput: return "empty-input";
    case ErrorKind::kSilentSource: return "silent-source";
    case ErrorKind::kNoSource: return "no-source";
    case ErrorKind::kOverlapUnavailable: return "overlap-unavailable";
    case ErrorKind::kNoFragment: return "no-fragment";
    case ErrorKind::kAllSilent: return "all-silent";
    case ErrorKind::kCannotPartition: return "cannot-partition";
    case ErrorKind::kResolution: return "resolution";
    case ErrorKind::kSingularProjection: return "singular-projection";
    case ErrorKind::kAlignment: return "alignment";
    case ErrorKind::kUnsupportedEvaluation: return "unsupported-evaluation";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kNotFound: return "not-found";
    case ErrorKind::kValidation: return "validation";
  }
  return "unknown";
}

/// Every failure raised by the library carries a kind so callers (the CLI,
/// the HTTP layer) can map it to exit codes or status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace podmix
