#pragma once

#include <stdexcept>
#include <string>

namespace geopot {

enum class ErrorCode {
  InvalidArgument,
  AllMissing,
  NonPositiveTheta,
  AlphaNotOne,
  SingularCovariance,
  RankDeficientX,
  OptimizerFailure,
  SingularInformation,
  NoUncertaintySource,
  EmptyFeasibleSet,
  CovariateCoverageGap,
  ParseError,
  DimensionMismatch,
  ConfigError,
  IoError,
};

const char* to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-readable failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace geopot
