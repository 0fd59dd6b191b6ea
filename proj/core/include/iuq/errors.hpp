#pragma once

#include <stdexcept>
#include <string>

namespace iuq {

/// Raised when inputs, files, or configurations violate a documented contract.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a numerical procedure cannot proceed (non-PD matrix, divergence, ...).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace iuq
