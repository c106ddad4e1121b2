#include "urbanflux/errors.hpp"

namespace urbanflux {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return "UsageError";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Io: return "IoError";
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::Range: return "RangeError";
    case ErrorKind::OrderTime: return "OrderTimeError";
    case ErrorKind::DegenerateExtent: return "DegenerateExtent";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::Shape: return "ShapeError";
    case ErrorKind::Divergence: return "DivergenceError";
    case ErrorKind::ZeroGroundTruth: return "ZeroGroundTruth";
    case ErrorKind::NormMismatch: return "NormMismatch";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::NegativeCount: return "NegativeCount";
  }
  return "Error";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::Config:
      return 1;
    case ErrorKind::Divergence:
      return 3;
    default:
      return 2;
  }
}

}  // namespace urbanflux
