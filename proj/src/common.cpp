#include <fmt/format.h>

#include "bolero/error.hpp"
#include "bolero/hashing.hpp"

namespace bolero {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::DuplicateColumn: return "DuplicateColumn";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::AllMissingColumn: return "AllMissingColumn";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::ZeroMarginal: return "ZeroMarginal";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::RowCountMismatch: return "RowCountMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MissingCell: return "MissingCell";
    case ErrorCode::NonPositiveRMSE: return "NonPositiveRMSE";
    case ErrorCode::CoverageMismatch: return "CoverageMismatch";
    case ErrorCode::TooFewNonZero: return "TooFewNonZero";
    case ErrorCode::IncompleteMatrix: return "IncompleteMatrix";
    case ErrorCode::DegenerateVariances: return "DegenerateVariances";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

std::string hex64(std::uint64_t value) { return fmt::format("{:016x}", value); }

}  // namespace bolero
