#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace infoacq {

enum class ErrorCode {
  InvalidParams,
  CostRangeError,
  DomainError,
  StepSizeError,
  SlopeOutOfRange,
  NoConvergence,
  FootPointEscape,
  ConcavityViolation,
  NegativeRadicand,
  CaseMismatch,
  NonSmoothPoint,
  SingularJacobian,
  SignMismatch,
  GammaOutOfRange,
  NumericalBlowup,
  OrderingViolation,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }
  // Text without the code prefix carried by what().
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace infoacq
