#pragma once

#include <stdexcept>
#include <string>

namespace sabvi {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter lies outside the domain of the requested formula
/// (e.g. a Renyi order of 1, a non-positive scale).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A numerical evaluation produced a non-finite value or was dominated by
/// floored density values. The message names the offending term.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// The Monte Carlo objective was asked for a limit region it does not cover.
class UnsupportedRegion : public Error {
 public:
  using Error::Error;
};

/// A model returned a non-finite log joint or was given mismatched inputs.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Malformed user input: config files, density specs, CSV content.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A dataset that parses but cannot be used (zero-variance column, empty
/// split, ...).
class DataError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Linear-algebra failure (singular precision matrix and the like).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace sabvi
