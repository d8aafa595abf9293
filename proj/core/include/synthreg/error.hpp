#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace synthreg {

enum class ErrorKind {
  parse,
  structure,
  empty_panel,
  insufficient_history,
  invalid_input,
  invalid_penalty,
  dimension_mismatch,
  non_convergence,
  io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

}  // namespace synthreg
