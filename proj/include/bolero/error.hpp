#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bolero {

enum class ErrorCode {
  // dataset
  MissingColumn,
  DuplicateColumn,
  EmptyFile,
  TooFewRows,
  AllMissingColumn,
  SchemaMismatch,
  // graph
  ZeroMarginal,
  // embed
  FormatError,
  RowCountMismatch,
  NonFiniteValue,
  // gnn head
  ShapeMismatch,
  NonFiniteActivation,
  StaleCache,
  // train
  EmptyMask,
  EmptyInput,
  // stats
  MissingCell,
  NonPositiveRMSE,
  CoverageMismatch,
  TooFewNonZero,
  IncompleteMatrix,
  DegenerateVariances,
  // plumbing
  InvalidArgument,
  ConfigError,
  IoError,
};

std::string_view error_code_name(ErrorCode code);

// All library failures are reported through this type so callers can branch
// on code() without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace bolero
