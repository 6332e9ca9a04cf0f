#pragma once

#include <stdexcept>
#include <string>

namespace tsfm {

// Base of every error raised by the library. The CLI maps the subclasses to
// exit codes (see tools/tsfm_main.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor or signal shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameter or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent data (labels, subjects, splits).
class DataError : public Error {
 public:
  using Error::Error;
};

// API misuse: calling an operation outside its contract.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Corrupt or truncated files.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsfm
