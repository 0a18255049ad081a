#include "uln/error.hpp"

namespace uln {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::Unstable: return "Unstable";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::BadProbability: return "BadProbability";
    case ErrorCode::BadConfidence: return "BadConfidence";
    case ErrorCode::MissingNoiseValues: return "MissingNoiseValues";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::ToleranceNotMet: return "ToleranceNotMet";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace uln
