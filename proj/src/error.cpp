#include "umri/error.hpp"

namespace umri {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotStochastic: return "NotStochastic";
    case ErrorCode::TooFewAgents: return "TooFewAgents";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::RaggedAgents: return "RaggedAgents";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::DegenerateDataset: return "DegenerateDataset";
    case ErrorCode::ProfileMismatch: return "ProfileMismatch";
    case ErrorCode::RejectionExhausted: return "RejectionExhausted";
    case ErrorCode::NegativeCycle: return "NegativeCycle";
    case ErrorCode::CostRangeExceeded: return "CostRangeExceeded";
    case ErrorCode::InstanceTooLarge: return "InstanceTooLarge";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonSquare: return "NonSquare";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace umri
