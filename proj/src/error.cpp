#include "nwhead/error.hpp"

namespace nwhead {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kInvalidTemperature: return "invalid_temperature";
    case ErrorCode::kEmptySupport: return "empty_support";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kCannotRemoveLast: return "cannot_remove_last";
    case ErrorCode::kDegenerateWeight: return "degenerate_weight";
    case ErrorCode::kUndefinedLoss: return "undefined_loss";
    case ErrorCode::kInfeasibleK: return "infeasible_k";
    case ErrorCode::kInsufficientClassPopulation: return "insufficient_class_population";
    case ErrorCode::kInvalidGrid: return "invalid_grid";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kGeneration: return "generation_error";
    case ErrorCode::kStratification: return "stratification_error";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kNumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

}  // namespace nwhead
