#pragma once

#include <stdexcept>
#include <string>

namespace nwhead {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kInvalidTemperature,
  kEmptySupport,
  kEmptyInput,
  kCannotRemoveLast,
  kDegenerateWeight,
  kUndefinedLoss,
  kInfeasibleK,
  kInsufficientClassPopulation,
  kInvalidGrid,
  kParse,
  kGeneration,
  kStratification,
  kNotFound,
  kIo,
  kNumericalFailure,
};

const char* error_code_name(ErrorCode code);

// Every library failure is reported through this type; `code()` is stable
// and is what the CLI maps onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace nwhead
