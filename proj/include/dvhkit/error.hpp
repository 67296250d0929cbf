#pragma once

#include <stdexcept>
#include <string>

namespace dvhkit {

enum class ErrorCode {
  // curves and grids
  MismatchedLengths,
  NonMonotoneDoseAxis,
  DoseOutOfRange,
  InvalidCurve,
  InvalidFeatures,
  // export parsing
  MalformedHeader,
  MissingDoseTable,
  UnitNotRecognized,
  StructureUnresolved,
  AmbiguousMatch,
  ZeroOrganVolume,
  // fitting
  ConstantFeature,
  SingularSystem,
  NotConverged,
  EmptyTrainingSet,
  DivergedLoss,
  InvalidHyperparams,
  UnknownAlgorithm,
  // evaluation and statistics
  EmptyCohort,
  EmptyBand,
  InsufficientPositive,
  DegenerateFit,
  ZeroVariance,
  // pipeline
  InvalidConfig,
  NoParseableFiles,
  PiiDetected,
  TooFewRecords,
  VersionMismatch,
  CorruptBundle,
  EmptyValidation,
  Io,
};

const char* to_string(ErrorCode code) noexcept;

/// True for errors caused by bad user input (CLI exit code 1). Fitting
/// failures such as a diverged loss are reported as internal (exit code 2).
bool is_input_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  /// The text without the "Code: " prefix, for rewrapping.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace dvhkit
