#include "dvhkit/error.hpp"

namespace dvhkit {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MismatchedLengths: return "MismatchedLengths";
    case ErrorCode::NonMonotoneDoseAxis: return "NonMonotoneDoseAxis";
    case ErrorCode::DoseOutOfRange: return "DoseOutOfRange";
    case ErrorCode::InvalidCurve: return "InvalidCurve";
    case ErrorCode::InvalidFeatures: return "InvalidFeatures";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::MissingDoseTable: return "MissingDoseTable";
    case ErrorCode::UnitNotRecognized: return "UnitNotRecognized";
    case ErrorCode::StructureUnresolved: return "StructureUnresolved";
    case ErrorCode::AmbiguousMatch: return "AmbiguousMatch";
    case ErrorCode::ZeroOrganVolume: return "ZeroOrganVolume";
    case ErrorCode::ConstantFeature: return "ConstantFeature";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::InvalidHyperparams: return "InvalidHyperparams";
    case ErrorCode::UnknownAlgorithm: return "UnknownAlgorithm";
    case ErrorCode::EmptyCohort: return "EmptyCohort";
    case ErrorCode::EmptyBand: return "EmptyBand";
    case ErrorCode::InsufficientPositive: return "InsufficientPositive";
    case ErrorCode::DegenerateFit: return "DegenerateFit";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::NoParseableFiles: return "NoParseableFiles";
    case ErrorCode::PiiDetected: return "PiiDetected";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptBundle: return "CorruptBundle";
    case ErrorCode::EmptyValidation: return "EmptyValidation";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

bool is_input_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::SingularSystem:
    case ErrorCode::NotConverged:
    case ErrorCode::DivergedLoss:
      return false;
    default:
      return true;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

}  // namespace dvhkit
