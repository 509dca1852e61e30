#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace umri {

enum class ErrorCode {
  DimensionMismatch,
  NotStochastic,
  TooFewAgents,
  EmptyClass,
  RaggedAgents,
  InvalidArgument,
  NumericalFailure,
  DegenerateDataset,
  ProfileMismatch,
  RejectionExhausted,
  NegativeCycle,
  CostRangeExceeded,
  InstanceTooLarge,
  OutOfRange,
  ShapeMismatch,
  NonSquare,
  IoFailure,
  ParseError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace umri
