#pragma once

#include <stdexcept>
#include <string>

namespace unifloral {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition: dimension mismatch, out-of-range argument.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A non-finite value appeared; `op()` names the operation that produced it.
class NumericError : public Error {
 public:
  NumericError(std::string op, const std::string& what)
      : Error(what), op_(std::move(op)) {}
  explicit NumericError(std::string op)
      : Error("non-finite value produced by '" + op + "'"), op_(std::move(op)) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

// File cannot be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file content (bad magic, bad header, bad values).
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class NonFiniteDataError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace unifloral
