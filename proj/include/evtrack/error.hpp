#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace evtrack {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input bytes. Carries the byte offset of the offending record.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// A decoded value violates a domain invariant (bounds, polarity, box shape).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Out-of-order input. Carries the index of the first offending element.
class OrderingError : public Error {
 public:
  OrderingError(const std::string& what, std::size_t index)
      : Error(what + " (at index " + std::to_string(index) + ")"), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of a mathematical operation (negative dt, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure inside the Kalman filter.
class FilterError : public Error {
 public:
  using Error::Error;
};

/// Query outside the time span covered by a signal (no silent extrapolation).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// A metric whose denominator is empty.
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Transport-level failure talking to a detection backend.
class ConnectionError : public Error {
 public:
  using Error::Error;
};

/// The peer violated the wire protocol. Fatal for the session.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// The backend answered with an explicit error message.
class BackendError : public Error {
 public:
  using Error::Error;
};

}  // namespace evtrack
