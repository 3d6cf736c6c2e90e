#pragma once

#include <stdexcept>
#include <string>

namespace msreg {

enum class ErrorCode {
  UnsupportedFormat,
  BandOutOfRange,
  IoFailure,
  NonPositiveSigma,
  ImageTooSmall,
  ImageTooSmallForOctaves,
  OctaveOutOfRange,
  InvalidConfig,
  TooFewKeypoints,
  WindowOutOfBounds,
  InvalidOrientation,
  DegeneratePatch,
  EmptyBundle,
  InsufficientMatches,
  InsufficientPoints,
  DegenerateConfiguration,
  PointAtInfinity,
  SingularTransform,
  DimensionMismatch,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::BandOutOfRange: return "BandOutOfRange";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::NonPositiveSigma: return "NonPositiveSigma";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::ImageTooSmallForOctaves: return "ImageTooSmallForOctaves";
    case ErrorCode::OctaveOutOfRange: return "OctaveOutOfRange";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::TooFewKeypoints: return "TooFewKeypoints";
    case ErrorCode::WindowOutOfBounds: return "WindowOutOfBounds";
    case ErrorCode::InvalidOrientation: return "InvalidOrientation";
    case ErrorCode::DegeneratePatch: return "DegeneratePatch";
    case ErrorCode::EmptyBundle: return "EmptyBundle";
    case ErrorCode::InsufficientMatches: return "InsufficientMatches";
    case ErrorCode::InsufficientPoints: return "InsufficientPoints";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::PointAtInfinity: return "PointAtInfinity";
    case ErrorCode::SingularTransform: return "SingularTransform";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code so
/// callers (the CLI in particular) can map it to a stage-specific exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace msreg
