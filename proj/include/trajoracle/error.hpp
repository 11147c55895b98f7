#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trajoracle {

enum class ErrorCode {
  SpanTooShort,
  NonMonotoneTime,
  InvalidInput,
  ParseError,
  EmptyNetwork,
  RegionTooSmall,
  OracleUnparseable,
  OracleTransport,
  AuthError,
  GroupTooSmall,
  LengthMismatch,
  IncompleteGroup,
  TooFewTrajectories,
  TemplateMissing,
  EmptyBatch,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI's exit-code mapping) can branch on kind, not text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace trajoracle
