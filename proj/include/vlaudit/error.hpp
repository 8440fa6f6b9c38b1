#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vlaudit {

enum class ErrorCode {
  ParseError,
  DuplicateId,
  UnknownAttributeValue,
  InvalidRecord,
  UnknownKey,
  MissingPlaceholder,
  BadMagic,
  UnsupportedDtype,
  TruncatedPayload,
  TrailingBytes,
  NonFinitePayload,
  ZeroVector,
  DimensionMismatch,
  MissingPrompt,
  EmptySample,
  DegenerateVariance,
  DegenerateSpread,
  SizeMismatch,
  InvalidArgument,
  NoValidPair,
  UndefinedDivergence,
  Io,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownAttributeValue: return "UnknownAttributeValue";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::MissingPlaceholder: return "MissingPlaceholder";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedDtype: return "UnsupportedDtype";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::TrailingBytes: return "TrailingBytes";
    case ErrorCode::NonFinitePayload: return "NonFinitePayload";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MissingPrompt: return "MissingPrompt";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::DegenerateSpread: return "DegenerateSpread";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NoValidPair: return "NoValidPair";
    case ErrorCode::UndefinedDivergence: return "UndefinedDivergence";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library. `what()` reads `Code(detail)`, e.g.
/// `DuplicateId(a01)`, so messages stay greppable from the CLI.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail)
      : std::runtime_error(std::string(to_string(code)) + "(" + detail + ")"),
        code_(code),
        detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace vlaudit
