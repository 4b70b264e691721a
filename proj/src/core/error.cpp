#include "fundus/core/error.hpp"

namespace fundus {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ParseError: return "ParseError";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::MissingImageFile: return "MissingImageFile";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::UnreadableRaster: return "UnreadableRaster";
    case Errc::IoError: return "IoError";
    case Errc::AdapterFailure: return "AdapterFailure";
    case Errc::EmptyTrainingSet: return "EmptyTrainingSet";
    case Errc::MissingField: return "MissingField";
    case Errc::MalformedOutput: return "MalformedOutput";
    case Errc::RefusalDetected: return "RefusalDetected";
    case Errc::InvalidTransition: return "InvalidTransition";
    case Errc::NotFound: return "NotFound";
    case Errc::NoBoxes: return "NoBoxes";
    case Errc::MissingAcceptedText: return "MissingAcceptedText";
    case Errc::NotMultiturn: return "NotMultiturn";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::JudgeFailure: return "JudgeFailure";
    case Errc::MalformedJudgeOutput: return "MalformedJudgeOutput";
    case Errc::DegenerateInput: return "DegenerateInput";
    case Errc::StoreError: return "StoreError";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace fundus
