#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mvg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text; carries the 1-based line and/or 0-based character offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t offset)
      : Error(what), line_(line), offset_(offset) {}
  std::size_t line() const { return line_; }
  std::size_t offset() const { return offset_; }

 private:
  std::size_t line_;
  std::size_t offset_;
};

/// Invalid configuration or argument.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values in a loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvg
