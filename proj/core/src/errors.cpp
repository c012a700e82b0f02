#include "infoacq/errors.hpp"

namespace infoacq {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::CostRangeError: return "CostRangeError";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::StepSizeError: return "StepSizeError";
    case ErrorCode::SlopeOutOfRange: return "SlopeOutOfRange";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::FootPointEscape: return "FootPointEscape";
    case ErrorCode::ConcavityViolation: return "ConcavityViolation";
    case ErrorCode::NegativeRadicand: return "NegativeRadicand";
    case ErrorCode::CaseMismatch: return "CaseMismatch";
    case ErrorCode::NonSmoothPoint: return "NonSmoothPoint";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::SignMismatch: return "SignMismatch";
    case ErrorCode::GammaOutOfRange: return "GammaOutOfRange";
    case ErrorCode::NumericalBlowup: return "NumericalBlowup";
    case ErrorCode::OrderingViolation: return "OrderingViolation";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace infoacq
