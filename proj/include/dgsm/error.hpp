#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dgsm {

enum class ErrorCode {
  MissingColumn,
  NonMonotonicFrames,
  EmptyFile,
  BadRatios,
  BadSpec,
  ShapeMismatch,
  EmptyBatch,
  BadLambda,
  KTooLarge,
  InsufficientData,
  NonFiniteLoss,
  DimensionMismatch,
  EmptyConditions,
  BadWeight,
  CapacityZero,
  AllZeroDivergence,
  BadCapacity,
  BadDivergence,
  UnknownScenario,
  NonFiniteInput,
  Empty,
  MissingBaseline,
  NoConflict,
  MissingArtifacts,
  BadConfig,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonMonotonicFrames: return "NonMonotonicFrames";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::BadRatios: return "BadRatios";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::BadLambda: return "BadLambda";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyConditions: return "EmptyConditions";
    case ErrorCode::BadWeight: return "BadWeight";
    case ErrorCode::CapacityZero: return "CapacityZero";
    case ErrorCode::AllZeroDivergence: return "AllZeroDivergence";
    case ErrorCode::BadCapacity: return "BadCapacity";
    case ErrorCode::BadDivergence: return "BadDivergence";
    case ErrorCode::UnknownScenario: return "UnknownScenario";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::MissingBaseline: return "MissingBaseline";
    case ErrorCode::NoConflict: return "NoConflict";
    case ErrorCode::MissingArtifacts: return "MissingArtifacts";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above; the
/// CLI maps codes to exit statuses and prints `name(): what()`.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return to_string(code_); }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace dgsm
