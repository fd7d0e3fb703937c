#include "fwbench/error.hpp"

namespace fwbench {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::MissingFile: return "missing file";
    case ErrorKind::MalformedInput: return "malformed input";
    case ErrorKind::OutOfRange: return "out of range";
    case ErrorKind::LengthMismatch: return "length mismatch";
    case ErrorKind::UnknownLead: return "unknown lead";
    case ErrorKind::SignalTooShort: return "signal too short";
    case ErrorKind::TooFewBeats: return "too few beats";
    case ErrorKind::SingleClass: return "single class";
    case ErrorKind::InsufficientData: return "insufficient data";
    case ErrorKind::ColumnMismatch: return "column mismatch";
    case ErrorKind::Io: return "i/o error";
  }
  return "unknown";
}

}  // namespace fwbench
