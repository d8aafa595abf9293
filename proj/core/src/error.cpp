#include "synthreg/error.hpp"

namespace synthreg {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::parse: return "parse error";
    case ErrorKind::structure: return "structure error";
    case ErrorKind::empty_panel: return "empty panel";
    case ErrorKind::insufficient_history: return "insufficient history";
    case ErrorKind::invalid_input: return "invalid input";
    case ErrorKind::invalid_penalty: return "invalid penalty";
    case ErrorKind::dimension_mismatch: return "dimension mismatch";
    case ErrorKind::non_convergence: return "non-convergence";
    case ErrorKind::io: return "i/o error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

}  // namespace synthreg
