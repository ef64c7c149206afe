#include "fpgen/error.hpp"

namespace fpgen {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "Io";
    case ErrorCode::NonGrayscaleInput: return "NonGrayscaleInput";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::NoForeground: return "NoForeground";
    case ErrorCode::ForegroundTouchesAllBorders: return "ForegroundTouchesAllBorders";
    case ErrorCode::ForegroundFractionOutOfRange: return "ForegroundFractionOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::DatasetTooSmall: return "DatasetTooSmall";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::IncompatibleCheckpoints: return "IncompatibleCheckpoints";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::TooFewSubjects: return "TooFewSubjects";
    case ErrorCode::MissingSubject: return "MissingSubject";
    case ErrorCode::Format: return "Format";
  }
  return "Unknown";
}

}  // namespace fpgen
