#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pogvins {

enum class ErrorCode {
  kInvalidArgument,
  kNonConvergence,
  kDegenerateGeometry,
  kBehindCamera,
  kNonMonotonicTime,
  kCovarianceNotPsd,
  kInsufficientMotion,
  kWindowFull,
  kSingularInnovation,
  kInsufficientSatellites,
  kNotPositiveDefinite,
  kConfigInvalid,
  kParseError,
  kModeUnsupported,
  kNoOverlap,
  kIoError,
};

std::string_view to_string(ErrorCode code);

/// Exception type thrown for contract violations and unrecoverable numerical failures.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pogvins
