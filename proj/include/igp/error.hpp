#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace igp {

enum class ErrorCode {
  NotPositiveDefinite,
  DimensionMismatch,
  NonScalarLoss,
  SampleCountExceedsOrbit,
  UnsupportedShape,
  NotFiniteOrbit,
  TooFewSamples,
  WrongLikelihood,
  BadMagic,
  TruncatedFile,
  CountMismatch,
  ShapeMismatch,
  BadConfig,
  BadCheckpoint,
  IoError,
  NonFiniteObjective,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
  case ErrorCode::DimensionMismatch: return "DimensionMismatch";
  case ErrorCode::NonScalarLoss: return "NonScalarLoss";
  case ErrorCode::SampleCountExceedsOrbit: return "SampleCountExceedsOrbit";
  case ErrorCode::UnsupportedShape: return "UnsupportedShape";
  case ErrorCode::NotFiniteOrbit: return "NotFiniteOrbit";
  case ErrorCode::TooFewSamples: return "TooFewSamples";
  case ErrorCode::WrongLikelihood: return "WrongLikelihood";
  case ErrorCode::BadMagic: return "BadMagic";
  case ErrorCode::TruncatedFile: return "TruncatedFile";
  case ErrorCode::CountMismatch: return "CountMismatch";
  case ErrorCode::ShapeMismatch: return "ShapeMismatch";
  case ErrorCode::BadConfig: return "BadConfig";
  case ErrorCode::BadCheckpoint: return "BadCheckpoint";
  case ErrorCode::IoError: return "IoError";
  case ErrorCode::NonFiniteObjective: return "NonFiniteObjective";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so the
/// CLI can report it in machine-readable form.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string &what) {
  throw Error(code, what);
}

} // namespace igp
