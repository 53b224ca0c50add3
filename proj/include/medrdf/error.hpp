#pragma once

#include <stdexcept>
#include <string>

namespace medrdf {

// Category of a failure. The CLI maps each category to its own exit code.
enum class ErrorKind {
  InvalidInput,
  InvalidConfig,
  Parse,
  Capability,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what) : Error(ErrorKind::InvalidInput, what) {}
};

class InvalidConfig : public Error {
 public:
  explicit InvalidConfig(const std::string& what) : Error(ErrorKind::InvalidConfig, what) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorKind::Parse, what) {}
};

// Raised when an operation needs something the model does not provide,
// e.g. input gradients from a black-box classifier.
class CapabilityError : public Error {
 public:
  explicit CapabilityError(const std::string& what) : Error(ErrorKind::Capability, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

const char* to_string(ErrorKind kind) noexcept;

// Process exit code for a failure category (0 is reserved for success).
int exit_code(ErrorKind kind) noexcept;

}  // namespace medrdf
