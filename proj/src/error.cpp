#include "sns/error.hpp"

namespace sns {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kTimeRegression: return "TimeRegression";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kZeroNorm: return "ZeroNorm";
    case ErrorCode::kDivisionByZero: return "DivisionByZero";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kNonMonotoneTimestamp: return "NonMonotoneTimestamp";
    case ErrorCode::kMissingRequiredKey: return "MissingRequiredKey";
    case ErrorCode::kTypeError: return "TypeError";
    case ErrorCode::kRangeError: return "RangeError";
    case ErrorCode::kInsufficientWarmup: return "InsufficientWarmup";
    case ErrorCode::kInsufficientHistory: return "InsufficientHistory";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kAuditFailure: return "AuditFailure";
  }
  return "Unknown";
}

static std::string format_message(ErrorCode code, const std::string& what,
                                  std::int64_t line) {
  std::string msg = to_string(code);
  if (line >= 0) msg += " (line " + std::to_string(line) + ")";
  msg += ": ";
  msg += what;
  return msg;
}

Error::Error(ErrorCode code, const std::string& what, std::int64_t line)
    : std::runtime_error(format_message(code, what, line)), code_(code), line_(line) {}

}  // namespace sns
