#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fwbench {

/// Error classes raised by the library. Every failure carries one of these so
/// callers (and the CLI exit-code mapping) can tell them apart.
enum class ErrorKind {
  InvalidArgument,
  MissingFile,
  MalformedInput,
  OutOfRange,
  LengthMismatch,
  UnknownLead,
  SignalTooShort,
  TooFewBeats,
  SingleClass,
  InsufficientData,
  ColumnMismatch,
  Io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

/// Mixes a master seed with a task index (splitmix64 finalizer). Used wherever
/// independent tasks need their own reproducible random stream.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace fwbench
