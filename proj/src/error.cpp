#include "railwave/error.hpp"

namespace railwave {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::ChannelCountMismatch: return "ChannelCountMismatch";
    case ErrorCode::NonFiniteSample: return "NonFiniteSample";
    case ErrorCode::BadPartCount: return "BadPartCount";
    case ErrorCode::BadChannel: return "BadChannel";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::BadFraction: return "BadFraction";
    case ErrorCode::BadBand: return "BadBand";
    case ErrorCode::NyquistExceeded: return "NyquistExceeded";
    case ErrorCode::SegmentTooShort: return "SegmentTooShort";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::EmptyScalogram: return "EmptyScalogram";
    case ErrorCode::BadParams: return "BadParams";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonPositiveOutputDim: return "NonPositiveOutputDim";
    case ErrorCode::DegenerateBatch: return "DegenerateBatch";
    case ErrorCode::BadLabel: return "BadLabel";
    case ErrorCode::MissingGradient: return "MissingGradient";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptBlob: return "CorruptBlob";
    case ErrorCode::MissingParam: return "MissingParam";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::BadIndex: return "BadIndex";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::MissingManifest: return "MissingManifest";
    case ErrorCode::MissingFeatures: return "MissingFeatures";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::Locked: return "Locked";
  }
  return "Unknown";
}

}  // namespace railwave
