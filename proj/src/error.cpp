#include "protocorrect/error.hpp"

namespace protocorrect {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::EmptyStore: return "EmptyStore";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::NothingEvictable: return "NothingEvictable";
    case ErrorKind::BudgetUnsatisfiable: return "BudgetUnsatisfiable";
    case ErrorKind::UnknownClass: return "UnknownClass";
    case ErrorKind::UnknownItem: return "UnknownItem";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace protocorrect
