#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bdci {

enum class ErrorCode {
  // input validation
  NonPositiveRate,
  NonFiniteRate,
  NonFiniteQuality,
  DuplicateRate,
  NonMonotoneQuality,
  TooFewPoints,
  DuplicateX,
  DegenerateInterval,
  EmptyIntersection,
  MetricMismatch,
  // fitting / evaluation
  SingularSystem,
  OutOfDomain,
  ToleranceNotMet,
  // segment estimator
  FlatY,
  DegenerateSpan,
  ExtrapolationRequired,
  // network
  DimensionMismatch,
  TooFewSamples,
  DivergedLoss,
  // bundle format
  BadMagic,
  VersionUnsupported,
  ChecksumMismatch,
  MissingCategory,
  // files and arguments
  ParseError,
  CorpusMismatch,
  InvalidArgument,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveRate: return "NonPositiveRate";
    case ErrorCode::NonFiniteRate: return "NonFiniteRate";
    case ErrorCode::NonFiniteQuality: return "NonFiniteQuality";
    case ErrorCode::DuplicateRate: return "DuplicateRate";
    case ErrorCode::NonMonotoneQuality: return "NonMonotoneQuality";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::DuplicateX: return "DuplicateX";
    case ErrorCode::DegenerateInterval: return "DegenerateInterval";
    case ErrorCode::EmptyIntersection: return "EmptyIntersection";
    case ErrorCode::MetricMismatch: return "MetricMismatch";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::ToleranceNotMet: return "ToleranceNotMet";
    case ErrorCode::FlatY: return "FlatY";
    case ErrorCode::DegenerateSpan: return "DegenerateSpan";
    case ErrorCode::ExtrapolationRequired: return "ExtrapolationRequired";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::MissingCategory: return "MissingCategory";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::CorpusMismatch: return "CorpusMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace bdci
