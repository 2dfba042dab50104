#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kkr {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A state or intermediate value left the finite range.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Malformed numeric or structural content in an input file.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Columns, headers or shapes inconsistent with the documented schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// The regularized Gram system could not be factored or solved.
class SingularGram : public Error {
 public:
  using Error::Error;
};

/// Only raised by the literal (unnormalized) pullback weights for |mu| << 1.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace kkr
