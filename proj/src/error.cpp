#include "catintell/error.hpp"

namespace catintell {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::DecodeError: return "DecodeError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::RangeError: return "RangeError";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::TooFewImages: return "TooFewImages";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::DegenerateLabels: return "DegenerateLabels";
    case ErrorKind::NumericalError: return "NumericalError";
    case ErrorKind::PhaseError: return "PhaseError";
    case ErrorKind::PairingError: return "PairingError";
    case ErrorKind::UsageError: return "UsageError";
  }
  return "Error";
}

Error::Error(ErrorKind kind, const std::string& detail)
    : std::runtime_error(std::string(error_kind_name(kind)) + ": " + detail), kind_(kind) {}

void fail(ErrorKind kind, const std::string& detail) { throw Error(kind, detail); }

}  // namespace catintell
