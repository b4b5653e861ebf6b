#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace catintell {

enum class ErrorKind {
  NotFound,
  DecodeError,
  IoError,
  ShapeError,
  RangeError,
  EmptyCorpus,
  TooFewImages,
  ConfigError,
  DegenerateLabels,
  NumericalError,
  PhaseError,
  PairingError,
  UsageError,
};

std::string_view error_kind_name(ErrorKind kind);

// All library failures are reported through this type; `kind()` is the
// stable, testable part and `what()` carries a human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& detail);

}  // namespace catintell
