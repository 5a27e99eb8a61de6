#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fpnas {

// Base of every error raised by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user configuration (unknown preset, image size not divisible, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A genome does not match the token schema of its space.
class SchemaError : public Error {
 public:
  SchemaError(std::size_t token_index, const std::string& what)
      : Error("token " + std::to_string(token_index) + ": " + what),
        token_index_(token_index) {}

  std::size_t token_index() const { return token_index_; }

 private:
  std::size_t token_index_;
};

// Resize ratio between two resolutions is not a power of two.
class UnsupportedScaleError : public Error {
 public:
  using Error::Error;
};

// Operator kind without a cost model.
class UnsupportedOpError : public Error {
 public:
  using Error::Error;
};

// A latency lookup hit a signature absent from the table.
class LookupMissError : public Error {
 public:
  using Error::Error;
};

// Argument outside a function's mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Internal invariant broken; unreachable for valid inputs.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// Malformed file content.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace fpnas
