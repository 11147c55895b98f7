#include "trajoracle/error.hpp"

namespace trajoracle {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::SpanTooShort: return "SpanTooShort";
    case ErrorCode::NonMonotoneTime: return "NonMonotoneTime";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyNetwork: return "EmptyNetwork";
    case ErrorCode::RegionTooSmall: return "RegionTooSmall";
    case ErrorCode::OracleUnparseable: return "OracleUnparseable";
    case ErrorCode::OracleTransport: return "OracleTransport";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::GroupTooSmall: return "GroupTooSmall";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::IncompleteGroup: return "IncompleteGroup";
    case ErrorCode::TooFewTrajectories: return "TooFewTrajectories";
    case ErrorCode::TemplateMissing: return "TemplateMissing";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace trajoracle
