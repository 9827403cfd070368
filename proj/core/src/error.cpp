#include "attralign/error.hpp"

namespace attralign {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DegenerateVector: return "DegenerateVector";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NonScalarOutput: return "NonScalarOutput";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::TooFewCategories: return "TooFewCategories";
    case ErrorCode::EmptyNegativeSet: return "EmptyNegativeSet";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MiningIncomplete: return "MiningIncomplete";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::ChoicesOutOfRange: return "ChoicesOutOfRange";
    case ErrorCode::DegenerateCovariance: return "DegenerateCovariance";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingKeys: return "MissingKeys";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::UnboundPlaceholder: return "UnboundPlaceholder";
  }
  return "Unknown";
}

}  // namespace attralign
