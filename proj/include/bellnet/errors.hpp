#pragma once

#include <stdexcept>
#include <string>

namespace bellnet {

/// Raised when a computation leaves the representable/expected numeric range
/// (overflow inside a forward pass, a linear solve that cannot reach its
/// residual contract, ...).
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised for malformed configuration or data files.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bellnet
