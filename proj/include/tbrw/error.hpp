#pragma once

#include <stdexcept>
#include <string>

namespace tbrw {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed tree input (cycle, disconnection, unknown vertex, bad snapshot).
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameter or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A computation whose preconditions cannot be met (singular solve, cap exceeded,
/// unreachable target).
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace tbrw
