#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fundus {

enum class Errc {
  InvalidArgument,
  ParseError,
  DuplicateId,
  MissingImageFile,
  DimensionMismatch,
  UnreadableRaster,
  IoError,
  AdapterFailure,
  EmptyTrainingSet,
  MissingField,
  MalformedOutput,
  RefusalDetected,
  InvalidTransition,
  NotFound,
  NoBoxes,
  MissingAcceptedText,
  NotMultiturn,
  InsufficientSamples,
  JudgeFailure,
  MalformedJudgeOutput,
  DegenerateInput,
  StoreError,
};

std::string_view to_string(Errc code) noexcept;

/// All recoverable failures in the pipeline are reported as an Error carrying
/// a machine-checkable code; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& message);

}  // namespace fundus
