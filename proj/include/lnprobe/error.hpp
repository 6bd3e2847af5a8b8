#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lnprobe {

enum class ErrorCode {
  BadMagic,
  UnsupportedVersion,
  TruncatedPayload,
  InvariantViolation,
  IndexOutOfRange,
  DimensionMismatch,
  LengthMismatch,
  ZeroVector,
  EmptyInput,
  MixedProvenance,
  DegenerateSystem,
  ConstantInput,
  UnknownLabel,
  MissingInput,
  ParseError,
  IoError,
};

std::string_view error_code_name(ErrorCode code);

// Every failure raised by the library carries a machine-readable code; the
// message names the offending field, offset, or index.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lnprobe
