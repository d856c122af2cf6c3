#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hbdm {

/// Numbered failure categories. The CLI maps these to process exit codes
/// (10 + value), so keep the numbering stable.
enum class ErrorCode : int {
  LightlikeTangent = 1,
  KinkWithoutSide = 2,
  NotInFuture = 3,
  BisectionFailure = 4,
  SpacelikeViolation = 5,
  InvalidFamily = 6,
  NonRealComponent = 7,
  NullCurrent = 8,
  NegativeDensity = 9,
  OnKinkSet = 10,
  NotOnKinkSet = 11,
  CornerPoint = 12,
  EnvelopeViolation = 13,
  DegenerateField = 14,
  OutOfDomain = 15,
  Unsupported = 16,
  ConfigError = 17,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hbdm
