#pragma once

#include <stdexcept>
#include <string>

namespace monoref {

enum class ErrorCode {
  kShapeMismatch,
  kNonFinite,
  kInvalidArgument,
  kDegenerate,
  kMagicMismatch,
  kTruncated,
  kDuplicateRecord,
  kUnknownDtype,
  kMissingRecord,
  kMalformed,
  kIo,
};

const char* ErrorCodeName(ErrorCode code);

// All library failures surface as this exception. `detail()` carries the
// offending dimension, record name, etc. without the code prefix.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const { return code_; }
  const std::string& detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

inline const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kDegenerate: return "degenerate input";
    case ErrorCode::kMagicMismatch: return "magic mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kDuplicateRecord: return "duplicate record";
    case ErrorCode::kUnknownDtype: return "unknown dtype";
    case ErrorCode::kMissingRecord: return "missing record";
    case ErrorCode::kMalformed: return "malformed container";
    case ErrorCode::kIo: return "io error";
  }
  return "error";
}

}  // namespace monoref
