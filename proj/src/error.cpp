#include "dime/error.hpp"

namespace dime {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::kDegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::kNotConverged: return "NotConverged";
    case ErrorCode::kSingularHessian: return "SingularHessian";
    case ErrorCode::kOutOfImageBounds: return "OutOfImageBounds";
    case ErrorCode::kEmptyBaseline: return "EmptyBaseline";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInvalidDims: return "InvalidDims";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kRetryExhausted: return "RetryExhausted";
    case ErrorCode::kInvalidKeep: return "InvalidKeep";
    case ErrorCode::kDegenerateBaseline: return "DegenerateBaseline";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

bool Error::is_numerical() const {
  switch (code_) {
    case ErrorCode::kNonPositiveDepth:
    case ErrorCode::kDegenerateConfiguration:
    case ErrorCode::kNotConverged:
    case ErrorCode::kSingularHessian:
    case ErrorCode::kEmptyBaseline:
    case ErrorCode::kDegenerateBaseline:
    case ErrorCode::kRetryExhausted:
      return true;
    default:
      return false;
  }
}

}  // namespace dime
