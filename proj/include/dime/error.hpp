#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

#include "dime/types.hpp"

namespace dime {

enum class ErrorCode {
  kInvalidArgument,
  kNonPositiveDepth,
  kDegenerateConfiguration,
  kNotConverged,
  kSingularHessian,
  kOutOfImageBounds,
  kEmptyBaseline,
  kDimensionMismatch,
  kInvalidDims,
  kOutOfRange,
  kRetryExhausted,
  kInvalidKeep,
  kDegenerateBaseline,
  kVersionMismatch,
  kParseError,
  kIoError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), index_(index) {}

  ErrorCode code() const { return code_; }
  /// Offending element (correspondence, sample, line) when one is known.
  std::optional<std::size_t> index() const { return index_; }

  /// True for failures caused by the numbers rather than by malformed input.
  bool is_numerical() const;

 private:
  ErrorCode code_;
  std::optional<std::size_t> index_;
};

/// Thrown by the iterative solvers when the iteration budget runs out.
class NotConvergedError : public Error {
 public:
  NotConvergedError(const PoseD& best, double cost)
      : Error(ErrorCode::kNotConverged, "iteration budget exhausted"), best_(best), cost_(cost) {}

  const PoseD& best_pose() const { return best_; }
  double best_cost() const { return cost_; }

 private:
  PoseD best_;
  double cost_;
};

}  // namespace dime
