#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace iptkit {

// Base class for every error raised by the library. Callers that only care
// about "something went wrong" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (CoNLL-U, vocab files, configs, checkpoints).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

// Shape mismatch inside a tensor operation.
class DimensionError : public Error {
 public:
  DimensionError(const std::string& op, const std::string& detail)
      : Error(op + ": " + detail) {}
};

// A configuration value or key is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace iptkit
