#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sns {

enum class ErrorCode {
  kIndexOutOfRange,
  kTimeRegression,
  kShapeMismatch,
  kNonFinite,
  kZeroNorm,
  kDivisionByZero,
  kParseError,
  kNonMonotoneTimestamp,
  kMissingRequiredKey,
  kTypeError,
  kRangeError,
  kInsufficientWarmup,
  kInsufficientHistory,
  kIoError,
  kAuditFailure,
};

const char* to_string(ErrorCode code);

// All library failures are reported through this exception. `line` is set for
// errors tied to an input file position (1-based, header is line 1).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::int64_t line = -1);

  ErrorCode code() const noexcept { return code_; }
  std::int64_t line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::int64_t line_;
};

}  // namespace sns
