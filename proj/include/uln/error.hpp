#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace uln {

enum class ErrorCode {
  NotSymmetric,
  NotPSD,
  Unstable,
  DimensionMismatch,
  SingularDesign,
  IndexOutOfRange,
  Diverged,
  BadProbability,
  BadConfidence,
  MissingNoiseValues,
  TooShort,
  ToleranceNotMet,
  InvalidArgument,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so the
/// runner can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Numerical failures (as opposed to bad input or configuration).
  bool is_numerical() const noexcept {
    return code_ == ErrorCode::NotPSD || code_ == ErrorCode::Unstable ||
           code_ == ErrorCode::Diverged || code_ == ErrorCode::SingularDesign ||
           code_ == ErrorCode::NotSymmetric || code_ == ErrorCode::ToleranceNotMet;
  }

 private:
  ErrorCode code_;
};

}  // namespace uln
