#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace protocorrect {

enum class ErrorKind {
  DimensionMismatch,
  ZeroVector,
  NonFinite,
  EmptyInput,
  LengthMismatch,
  InvalidConfig,
  EmptyStore,
  EmptyDataset,
  NothingEvictable,
  BudgetUnsatisfiable,
  UnknownClass,
  UnknownItem,
  FormatError,
  IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries one of the kinds above so
/// callers (CLI, HTTP layer) can map it to an exit code or status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace protocorrect
