#pragma once

#include <stdexcept>
#include <string>

namespace scdem {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An index (class label, layer, task) is outside its valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or combination.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed input text (dataset rows, config files).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Parsed data violates a declared constraint.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint bytes are truncated or corrupted.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint written by an incompatible format version.
class VersionError : public Error {
 public:
  using Error::Error;
};

}  // namespace scdem
