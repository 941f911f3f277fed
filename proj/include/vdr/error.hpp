#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vdr {

enum class ErrorCode {
  OutOfDomain,
  IndivisibleSide,
  BadSliceIndex,
  ShapeMismatch,
  BadScale,
  BadSide,
  EmptyTrainingSet,
  DegenerateParams,
  SeriesTooShort,
  EmptyDataset,
  InsufficientRecords,
  ParseError,
  BadMagic,
  TruncatedFile,
  FormatVersionMismatch,
  MissingInput,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::IndivisibleSide: return "IndivisibleSide";
    case ErrorCode::BadSliceIndex: return "BadSliceIndex";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BadScale: return "BadScale";
    case ErrorCode::BadSide: return "BadSide";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::DegenerateParams: return "DegenerateParams";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::InsufficientRecords: return "InsufficientRecords";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure in the library surfaces as this exception; `code()` is the
/// machine-readable kind and `what()` carries the detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vdr
