#include "lnprobe/error.hpp"

namespace lnprobe {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MixedProvenance: return "MixedProvenance";
    case ErrorCode::DegenerateSystem: return "DegenerateSystem";
    case ErrorCode::ConstantInput: return "ConstantInput";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Error";
}

}  // namespace lnprobe
