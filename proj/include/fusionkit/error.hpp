#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fusionkit {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; carries the 1-based line number of the offending record.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Input violates an operation's precondition (empty dataset, single class, k > n, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A numeric computation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace fusionkit
