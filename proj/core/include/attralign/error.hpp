#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace attralign {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NonFinite,
  DegenerateVector,
  EmptyInput,
  NonScalarOutput,
  EmptySequence,
  InvalidConfig,
  FormatError,
  UnknownCategory,
  IoError,
  TooFewCategories,
  EmptyNegativeSet,
  ShapeMismatch,
  MiningIncomplete,
  ConfigError,
  DegenerateLabels,
  EmptyClass,
  ChoicesOutOfRange,
  DegenerateCovariance,
  TransportError,
  ParseError,
  MissingKeys,
  EmptyText,
  UnboundPlaceholder,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every domain failure in the library is reported through this type; the
/// code is stable and meant for programmatic checks, the message for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace attralign
