#include "pogvins/errors.hpp"

namespace pogvins {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNonConvergence: return "NonConvergence";
    case ErrorCode::kDegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::kBehindCamera: return "BehindCamera";
    case ErrorCode::kNonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::kCovarianceNotPsd: return "CovarianceNotPSD";
    case ErrorCode::kInsufficientMotion: return "InsufficientMotion";
    case ErrorCode::kWindowFull: return "WindowFull";
    case ErrorCode::kSingularInnovation: return "SingularInnovation";
    case ErrorCode::kInsufficientSatellites: return "InsufficientSatellites";
    case ErrorCode::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kModeUnsupported: return "ModeUnsupported";
    case ErrorCode::kNoOverlap: return "NoOverlap";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace pogvins
