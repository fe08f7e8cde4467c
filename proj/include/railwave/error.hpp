#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace railwave {

enum class ErrorCode {
  // signal_core
  MissingFile,
  MalformedHeader,
  ChannelCountMismatch,
  NonFiniteSample,
  BadPartCount,
  BadChannel,
  EmptyClass,
  BadFraction,
  // wavelet
  BadBand,
  NyquistExceeded,
  SegmentTooShort,
  NonFiniteInput,
  EmptyScalogram,
  BadParams,
  // tensor_nn
  ShapeMismatch,
  NonPositiveOutputDim,
  DegenerateBatch,
  BadLabel,
  MissingGradient,
  // resnet
  BadSpec,
  EmptySplit,
  VersionMismatch,
  CorruptBlob,
  MissingParam,
  // metrics
  LengthMismatch,
  BadIndex,
  EmptyMatrix,
  // shared
  IoFailure,
  BadConfig,
  MissingManifest,
  MissingFeatures,
  Diverged,
  Locked,
};

std::string_view to_string(ErrorCode code);

/// Every failure in the library surfaces as this exception; `code()` names the contract that was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace railwave
