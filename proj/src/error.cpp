#include "medrdf/error.hpp"

namespace medrdf {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::InvalidConfig: return "invalid config";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Capability: return "capability error";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidInput: return 2;
    case ErrorKind::InvalidConfig: return 3;
    case ErrorKind::Parse: return 4;
    case ErrorKind::Capability: return 5;
    case ErrorKind::Io: return 6;
  }
  return 1;
}

}  // namespace medrdf
